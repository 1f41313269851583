// Command-line front end: simulate, fit, impute, cv, report, experiment.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arrayem/harness.hpp"
#include "arrayem/kernels.hpp"
#include "arrayem/model_io.hpp"
#include "arrayem/text.hpp"

namespace fs = std::filesystem;
using namespace arrayem;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4, kIo = 5 };

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string seed;
    std::string out;
    std::string threads;
    std::string format;
};

void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", o.config_path, "key=value configuration file");
    sub->add_option("--set", o.overrides, "Override a configuration key (key=value); repeatable");
    sub->add_option("--seed", o.seed, "Root random seed (u64)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_option("--format", o.format, "Report format: csv or svg");
}

Config resolve(const CommonOptions& o) {
    Config c = o.config_path.empty() ? Config{} : Config::load(o.config_path);
    for (const auto& s : o.overrides) c.apply_override(s);
    if (!o.seed.empty()) c.set("seed", o.seed);
    if (!o.out.empty()) c.set("out", o.out);
    if (!o.threads.empty()) c.set("threads", o.threads);
    if (!o.format.empty()) c.set("format", o.format);
    return c;
}

const std::set<std::string> kDataKeys{"data", "value_column", "sample_column", "delimiter", "missing_token", "dims"};
const std::set<std::string> kModelKeys{"mean",    "mean_dims",    "warm_start",   "max_iterations", "rel_tol",
                                       "estep",   "route",        "lambda_lower", "lambda_upper",   "lambda_grid"};
const std::set<std::string> kCommonKeys{"seed", "out", "threads", "format"};

std::set<std::string> merge(std::initializer_list<const std::set<std::string>*> sets, std::set<std::string> extra = {}) {
    for (const auto* s : sets) extra.insert(s->begin(), s->end());
    return extra;
}

std::string out_dir(const Config& c) {
    const std::string dir = c.require("out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    return dir;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

bool svg_requested(const Config& c) {
    const std::string f = c.get("format", "csv");
    if (f != "csv" && f != "svg") throw ConfigError("format must be csv or svg, got '" + f + "'");
    return f == "svg";
}

void write_reports(const std::string& dir, const std::vector<MetricsRecord>& records, bool svg) {
    const auto rows = summarize(records);
    write_summary(in_dir(dir, "summary.csv"), rows);
    if (svg) {
        for (const char* metric : {"correlation", "mse"}) {
            bool any = false;
            for (const auto& r : rows) any = any || r.metric == metric;
            if (any) write_boxplot_svg(in_dir(dir, std::string(metric) + ".svg"), rows, metric);
        }
    }
}

LongTable load_data(const Config& c) {
    return load_long_table(c.require("data"), table_schema(c));
}

int cmd_simulate(const Config& c) {
    c.check_keys(merge({&experiment_keys(), &kCommonKeys}, {"replication"}));
    const ExperimentConfig ec = ExperimentConfig::from_config(c);
    const std::string dir = out_dir(c);
    const Index n = *std::max_element(ec.sample_sizes.begin(), ec.sample_sizes.end());
    const Index p1 = ec.p1_values.front();
    const int rep = static_cast<int>(c.get_int("replication", 1));
    if (rep < 1) throw ConfigError("replication must be at least 1");
    const SimulatedReplication sim = simulate_replication(ec, p1, n, rep - 1);

    PartialSample complete;
    for (const auto& x : sim.complete) complete.push_back(PartialArray::complete(x));
    LongTable table = default_labels(complete, {});
    array_to_long_table(table, in_dir(dir, "complete.csv"));
    for (double p : ec.missing) {
        LongTable t = table;
        for (std::size_t l = 0; l < t.sample.size(); ++l) t.sample[l] = delete_cells(sim.complete[l], sim.uniforms[l], p);
        array_to_long_table(t, in_dir(dir, "data_p" + format_double(p) + ".csv"));
    }

    FitOutcome truth;
    truth.implied = sim.truth;
    truth.avspmm = sim.truth_avspmm;
    write_fit(in_dir(dir, "truth"), table, truth);
    if (sim.truth_avspmm) {
        const auto& k = std::get<KnownKernel>(sim.truth_avspmm->specs[0]).kernel;
        write_labeled_matrix(in_dir(dir, "kernel_1.csv"), {k, table.levels[0], table.levels[0]});
    }
    c.write(in_dir(dir, "resolved.cfg"));
    return kOk;
}

int cmd_fit(const Config& c) {
    c.check_keys(merge({&kDataKeys, &kModelKeys, &kCommonKeys}), {"levels.", "kernel.", "lambda."});
    const LongTable table = load_data(c);
    const ModelSpec spec = model_spec(c, table);
    const std::string dir = out_dir(c);
    const FitOutcome fit = fit_model(table.sample, spec);
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
    write_fit(dir, table, fit);
    c.write(in_dir(dir, "resolved.cfg"));
    std::cout << (fit.avspmm ? "avspmm" : "flip-flop") << ": " << fit.iterations << " iterations, "
              << (fit.converged ? "converged" : "not converged") << ", loglik "
              << format_double(fit.loglik_trace.back()) << '\n';
    return kOk;
}

int cmd_impute(const Config& c) {
    c.check_keys(merge({&kDataKeys, &kCommonKeys}, {"model"}), {"levels."});
    const std::string model_dir = c.require("model");
    TableSchema schema = table_schema(c);
    const auto levels = read_fit_levels(model_dir);
    const Config stored = Config::load(in_dir(model_dir, "model.cfg"));
    if (schema.dimensions.empty()) schema.dimensions = stored.get_list("dims");
    schema.levels = levels;
    const LongTable table = load_long_table(c.require("data"), schema);
    const ArrayNormalModel model = read_fit_model(model_dir, table);
    const std::string dir = out_dir(c);
    const std::size_t rows = write_imputed(in_dir(dir, "imputed.csv"), table, model, schema.delimiter);
    c.write(in_dir(dir, "resolved.cfg"));
    std::cout << rows << " imputed cells\n";
    return kOk;
}

int cmd_cv(const Config& c) {
    c.check_keys(merge({&kDataKeys, &kModelKeys, &kCommonKeys}, {"holdout", "replications", "trait_dim"}),
                 {"levels.", "kernel.", "lambda."});
    const LongTable table = load_data(c);
    const ModelSpec spec = model_spec(c, table);
    CvConfig cv;
    cv.holdout = c.get_doubles("holdout", cv.holdout);
    cv.replications = static_cast<int>(c.get_int("replications", cv.replications));
    cv.seed = c.get_u64("seed", cv.seed);
    cv.threads = static_cast<int>(c.get_int("threads", cv.threads));
    if (const auto trait = c.find("trait_dim")) {
        cv.trait_dim = -1;
        for (std::size_t k = 0; k < table.dimensions.size(); ++k) {
            if (table.dimensions[k] == *trait) cv.trait_dim = static_cast<Index>(k);
        }
        if (cv.trait_dim < 0) throw ConfigError("trait_dim '" + *trait + "' is not a dimension of the data");
    }
    const bool svg = svg_requested(c);
    const std::string dir = out_dir(c);
    const auto records = run_cv(table.sample, spec, cv);
    write_metrics(in_dir(dir, "metrics.csv"), records);
    write_slice_metrics(in_dir(dir, "slices.csv"), records);
    write_timing(in_dir(dir, "timing.csv"), records);
    write_reports(dir, records, svg);
    c.write(in_dir(dir, "resolved.cfg"));
    return kOk;
}

int cmd_experiment(const Config& c) {
    c.check_keys(merge({&experiment_keys(), &kCommonKeys}));
    const ExperimentConfig ec = ExperimentConfig::from_config(c);
    const bool svg = svg_requested(c);
    const std::string dir = out_dir(c);
    const auto records = run_experiment(ec);
    write_metrics(in_dir(dir, "metrics.csv"), records);
    if (ec.design == Design::MarkerCv) write_slice_metrics(in_dir(dir, "slices.csv"), records);
    write_timing(in_dir(dir, "timing.csv"), records);
    write_reports(dir, records, svg);
    c.write(in_dir(dir, "resolved.cfg"));
    std::size_t failures = 0;
    for (const auto& r : records) failures += r.error.empty() ? 0 : 1;
    std::cout << records.size() << " fits, " << failures << " failed\n";
    return kOk;
}

int cmd_report(const Config& c, const std::vector<std::string>& inputs) {
    c.check_keys(kCommonKeys);
    if (inputs.empty()) throw ConfigError("report needs at least one metrics table");
    const bool svg = svg_requested(c);
    std::vector<MetricsRecord> records;
    for (const auto& path : inputs) {
        auto r = read_metrics(path);
        records.insert(records.end(), r.begin(), r.end());
    }
    write_reports(out_dir(c), records, svg);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Array-variate normal models for incomplete data"};
    app.require_subcommand(1);

    CommonOptions o;
    std::string data_path;
    std::string model_path;
    std::vector<std::string> report_inputs;

    auto* simulate = app.add_subcommand("simulate", "Simulate a design's data, masks and generating parameters");
    auto* fit = app.add_subcommand("fit", "Fit a model to a long-format data file");
    auto* impute = app.add_subcommand("impute", "Impute missing cells under fitted parameters");
    auto* cv = app.add_subcommand("cv", "Hold out observed cells and score imputations");
    auto* report = app.add_subcommand("report", "Summarize metrics tables");
    auto* experiment = app.add_subcommand("experiment", "Run a scripted simulation experiment");
    for (auto* sub : {simulate, fit, impute, cv, report, experiment}) add_common(sub, o);
    for (auto* sub : {fit, impute, cv}) sub->add_option("--data", data_path, "Long-format data file");
    impute->add_option("--model", model_path, "Directory written by fit");
    report->add_option("metrics", report_inputs, "Metrics tables")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        Config c = resolve(o);
        if (!data_path.empty()) c.set("data", data_path);
        if (!model_path.empty()) c.set("model", model_path);
        if (*simulate) return cmd_simulate(c);
        if (*fit) return cmd_fit(c);
        if (*impute) return cmd_impute(c);
        if (*cv) return cmd_cv(c);
        if (*experiment) return cmd_experiment(c);
        return cmd_report(c, report_inputs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const InvalidArgument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const SizeLimitExceeded& e) {
        std::cerr << "size limit: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
