#include "arrayem/model_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "arrayem/kernels.hpp"
#include "arrayem/text.hpp"

namespace arrayem {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

std::string file_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

Index dimension_index(const LongTable& table, const std::string& name, const std::string& key) {
    for (std::size_t k = 0; k < table.dimensions.size(); ++k) {
        if (table.dimensions[k] == name) return static_cast<Index>(k);
    }
    throw ConfigError("key '" + key + "': '" + name + "' is not a dimension of the data");
}

Eigen::MatrixXd read_factor(const std::string& dir, Index k, const std::vector<std::string>& levels) {
    const std::string path = file_in(dir, "sigma_" + std::to_string(k + 1) + ".csv");
    LabeledMatrix m = read_labeled_matrix(path);
    if (m.row_labels != levels || m.column_labels != levels) {
        throw InvalidArgument(path + ": labels do not match the data levels of dimension " + std::to_string(k + 1));
    }
    return m.values;
}

MultiwayArray read_mean(const std::string& dir, const LongTable& table) {
    TableSchema schema;
    schema.dimensions = table.dimensions;
    schema.levels = table.levels;
    const std::string path = file_in(dir, "mean.csv");
    LongTable mean = load_long_table(path, schema);
    if (mean.sample.size() != 1 || mean.sample.front().mask.count_missing() != 0) {
        throw ParseError(path, 0, "mean must cover every cell exactly once");
    }
    return mean.sample.front().values;
}

void check_levels(const std::string& dir, const LongTable& table) {
    const auto stored = read_fit_levels(dir);
    if (stored.size() != table.levels.size()) {
        throw InvalidArgument("fit in " + dir + " has " + std::to_string(stored.size()) + " dimensions, data has " +
                              std::to_string(table.levels.size()));
    }
    for (std::size_t k = 0; k < stored.size(); ++k) {
        if (stored[k] != table.levels[k]) {
            throw InvalidArgument("levels of dimension " + std::to_string(k + 1) + " differ from the fit in " + dir);
        }
    }
}

AvspmmModel read_avspmm(const std::string& dir, const Config& stored, const LongTable& table, const ModelSpec& spec) {
    AvspmmModel m;
    const Shape shape = table.shape();
    for (Index k = 0; k < shape.order(); ++k) {
        const std::string idx = std::to_string(k + 1);
        const std::string kind = stored.require("kind." + idx);
        const auto& kernel = spec.kernels[static_cast<std::size_t>(k)];
        if ((kind == "known") != kernel.has_value()) {
            throw ConfigError("warm start: dimension " + idx + " is " + kind + " in the fit but not in this model");
        }
        if (kernel) {
            m.specs.emplace_back(KnownKernel{*kernel, stored.get_double("lambda." + idx, 1.0)});
        } else {
            m.specs.emplace_back(Unstructured{read_factor(dir, k, table.levels[static_cast<std::size_t>(k)])});
        }
    }
    m.sigma2 = stored.get_double("sigma2", 1.0);
    if (stored.get("mean", "additive") == "cellwise") {
        m.mean = AdditiveMean::zero(shape, std::vector<bool>(static_cast<std::size_t>(shape.order()), false));
        m.cellwise_mean = read_mean(dir, table);
    } else {
        std::vector<bool> included(static_cast<std::size_t>(shape.order()), false);
        for (long k : stored.get_ints("mean_dims", {})) {
            if (k < 1 || k > shape.order()) throw ConfigError("warm start: mean_dims out of range");
            included[static_cast<std::size_t>(k - 1)] = true;
        }
        m.mean = AdditiveMean::zero(shape, included);
        for (Index k = 0; k < shape.order(); ++k) {
            if (!included[static_cast<std::size_t>(k)]) continue;
            const std::string path = file_in(dir, "beta_" + std::to_string(k + 1) + ".csv");
            LabeledMatrix b = read_labeled_matrix(path);
            if (b.row_labels != table.levels[static_cast<std::size_t>(k)] || b.values.cols() != 1) {
                throw InvalidArgument(path + ": does not match the data levels");
            }
            m.mean.betas[static_cast<std::size_t>(k)] = b.values.col(0);
        }
    }
    m.validate();
    return m;
}

}  // namespace

char delimiter_of(const Config& config) {
    const std::string d = config.get("delimiter", "comma");
    if (d == "comma" || d == ",") return ',';
    if (d == "tab" || d == "\\t") return '\t';
    throw ConfigError("delimiter must be comma or tab, got '" + d + "'");
}

TableSchema table_schema(const Config& config) {
    TableSchema s;
    s.delimiter = delimiter_of(config);
    s.value_column = config.get("value_column", "value");
    s.sample_column = config.get("sample_column", "");
    s.missing_token = config.get("missing_token", "NA");
    s.dimensions = config.get_list("dims");
    const auto level_files = config.with_prefix("levels.");
    if (!level_files.empty()) {
        if (s.dimensions.empty()) throw ConfigError("levels.<dim> needs an explicit dims list");
        s.levels.assign(s.dimensions.size(), {});
        for (const auto& [dim, path] : level_files) {
            std::size_t k = 0;
            while (k < s.dimensions.size() && s.dimensions[k] != dim) ++k;
            if (k == s.dimensions.size()) throw ConfigError("key 'levels." + dim + "': unknown dimension");
            s.levels[k] = read_level_file(path);
        }
    }
    return s;
}

ModelSpec model_spec(const Config& config, const LongTable& table) {
    ModelSpec spec;
    const auto order = table.dimensions.size();
    spec.kernels.assign(order, std::nullopt);
    spec.initial_lambda.assign(order, 1.0);
    const char delim = delimiter_of(config);
    for (const auto& [dim, path] : config.with_prefix("kernel.")) {
        const Index k = dimension_index(table, dim, "kernel." + dim);
        const LabeledKernel kernel = load_kernel_matrix(path, delim);
        spec.kernels[static_cast<std::size_t>(k)] = align_kernel(kernel, table.levels[static_cast<std::size_t>(k)]);
    }
    for (const auto& [dim, value] : config.with_prefix("lambda.")) {
        const Index k = dimension_index(table, dim, "lambda." + dim);
        const double lambda = config.get_double("lambda." + dim, 1.0);
        if (!(lambda >= 0.0)) throw ConfigError("key 'lambda." + dim + "' must be non-negative");
        spec.initial_lambda[static_cast<std::size_t>(k)] = lambda;
    }
    const std::string mean = config.get("mean", "additive");
    if (mean == "additive") {
        spec.mean_model = MeanModel::Additive;
    } else if (mean == "cellwise") {
        spec.mean_model = MeanModel::Cellwise;
    } else {
        throw ConfigError("mean must be additive or cellwise, got '" + mean + "'");
    }
    if (config.has("mean_dims")) {
        spec.mean_dimensions.assign(order, false);
        for (const auto& dim : config.get_list("mean_dims")) {
            spec.mean_dimensions[static_cast<std::size_t>(dimension_index(table, dim, "mean_dims"))] = true;
        }
    }
    apply_fit_settings(config, spec);

    if (const auto dir = config.find("warm_start"); dir && !dir->empty()) {
        const Config stored = Config::load(file_in(*dir, "model.cfg"));
        check_levels(*dir, table);
        const std::string algorithm = stored.require("algorithm");
        if (algorithm == "flip-flop") {
            if (spec.any_known()) throw ConfigError("warm start from a Flip-Flop fit needs a model without kernels");
            ArrayNormalModel m = read_fit_model(*dir, table);
            spec.flip_flop.warm_start = std::move(m);
        } else if (algorithm == "avspmm") {
            if (!spec.any_known()) throw ConfigError("warm start from an AVSPMM fit needs at least one kernel");
            spec.avspmm.warm_start = read_avspmm(*dir, stored, table, spec);
        } else {
            throw ConfigError("unknown algorithm '" + algorithm + "' in " + file_in(*dir, "model.cfg"));
        }
    }
    return spec;
}

void write_fit(const std::string& dir, const LongTable& table, const FitOutcome& fit) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    const Shape shape = table.shape();
    if (!(fit.implied.shape() == shape)) throw InvalidArgument("fit does not match the table shape");

    Config cfg;
    cfg.set("algorithm", fit.avspmm ? "avspmm" : "flip-flop");
    cfg.set("dims", join(table.dimensions));
    cfg.set("arrays", std::to_string(table.sample.size()));
    cfg.set("iterations", std::to_string(fit.iterations));
    cfg.set("converged", fit.converged ? "true" : "false");
    cfg.set("loglik", format_double(fit.loglik_trace.empty() ? std::nan("") : fit.loglik_trace.back()));

    for (Index k = 0; k < shape.order(); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const std::string idx = std::to_string(k + 1);
        write_level_file(file_in(dir, "levels_" + idx + ".txt"), table.levels[kk]);
        write_labeled_matrix(file_in(dir, "sigma_" + idx + ".csv"),
                             {fit.implied.covariance.factor(k).sigma(), table.levels[kk], table.levels[kk]});
    }

    LongTable mean;
    mean.dimensions = table.dimensions;
    mean.levels = table.levels;
    mean.sample.push_back(PartialArray::complete(fit.implied.mean));
    array_to_long_table(mean, file_in(dir, "mean.csv"));

    if (fit.avspmm) {
        const AvspmmModel& m = *fit.avspmm;
        cfg.set("sigma2", format_double(m.sigma2));
        cfg.set("mean", m.cellwise_mean ? "cellwise" : "additive");
        std::string included;
        for (Index k = 0; k < shape.order(); ++k) {
            const auto kk = static_cast<std::size_t>(k);
            const std::string idx = std::to_string(k + 1);
            if (const auto* known = std::get_if<KnownKernel>(&m.specs[kk])) {
                cfg.set("kind." + idx, "known");
                cfg.set("lambda." + idx, format_double(known->lambda));
            } else {
                cfg.set("kind." + idx, "unstructured");
            }
            if (!m.cellwise_mean && m.mean.included[kk]) {
                included += (included.empty() ? "" : ",") + idx;
                write_labeled_matrix(file_in(dir, "beta_" + idx + ".csv"),
                                     {m.mean.betas[kk], table.levels[kk], {"beta"}});
            }
        }
        cfg.set("mean_dims", included);
    } else {
        for (Index k = 0; k < shape.order(); ++k) cfg.set("kind." + std::to_string(k + 1), "unstructured");
        cfg.set("mean", "cellwise");
    }
    cfg.write(file_in(dir, "model.cfg"));

    const std::string trace_path = file_in(dir, "trace.csv");
    std::ofstream trace(trace_path);
    if (!trace) throw IoError("cannot write " + trace_path);
    trace << "iteration,loglik\n";
    for (std::size_t t = 0; t < fit.loglik_trace.size(); ++t) trace << t << ',' << format_double(fit.loglik_trace[t]) << '\n';
    if (!trace) throw IoError("failed writing " + trace_path);
}

std::vector<std::vector<std::string>> read_fit_levels(const std::string& dir) {
    const Config stored = Config::load(file_in(dir, "model.cfg"));
    const auto dims = stored.get_list("dims");
    if (dims.empty()) throw ConfigError(file_in(dir, "model.cfg") + ": no dims");
    std::vector<std::vector<std::string>> out;
    for (std::size_t k = 0; k < dims.size(); ++k) out.push_back(read_level_file(file_in(dir, "levels_" + std::to_string(k + 1) + ".txt")));
    return out;
}

ArrayNormalModel read_fit_model(const std::string& dir, const LongTable& table) {
    check_levels(dir, table);
    const Shape shape = table.shape();
    std::vector<CovarianceFactor> f;
    for (Index k = 0; k < shape.order(); ++k) {
        f.emplace_back(read_factor(dir, k, table.levels[static_cast<std::size_t>(k)]), k);
    }
    ArrayNormalModel m{read_mean(dir, table), KroneckerCovariance(std::move(f))};
    m.validate();
    return m;
}

std::size_t write_imputed(const std::string& path, const LongTable& table, const ArrayNormalModel& model,
                          char delimiter) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const Shape shape = table.shape();
    const bool with_sample = !table.sample_column.empty();
    for (std::size_t k = 0; k < table.dimensions.size(); ++k) {
        out << (k ? std::string(1, delimiter) : "") << quote_field(table.dimensions[k], delimiter);
    }
    if (with_sample) out << delimiter << quote_field(table.sample_column, delimiter);
    out << delimiter << "value\n";

    std::size_t rows = 0;
    std::vector<Index> idx(static_cast<std::size_t>(shape.order()));
    for (std::size_t l = 0; l < table.sample.size(); ++l) {
        const auto& obs = table.sample[l];
        if (obs.mask.count_missing() == 0) continue;
        const MultiwayArray filled = conditional_mean_impute(obs, model, static_cast<Index>(l));
        for (Index c : obs.mask.missing_cells()) {
            shape.unravel(c, idx);
            for (Index k = 0; k < shape.order(); ++k) {
                if (k) out << delimiter;
                out << quote_field(table.levels[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])],
                                   delimiter);
            }
            if (with_sample) out << delimiter << quote_field(table.sample_ids[l], delimiter);
            out << delimiter << format_double(filled[c]) << '\n';
            ++rows;
        }
    }
    if (!out) throw IoError("failed writing " + path);
    return rows;
}

}  // namespace arrayem
