#include "arrayem/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>

#include "arrayem/kernels.hpp"

namespace arrayem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

std::vector<Index> to_index(const std::vector<long>& v) { return {v.begin(), v.end()}; }

}  // namespace

std::mt19937_64 stream_rng(std::uint64_t root, std::uint64_t stream, std::uint64_t purpose) {
    std::seed_seq seq{lo32(root), hi32(root), lo32(stream), hi32(stream), lo32(purpose), hi32(purpose)};
    return std::mt19937_64(seq);
}

Eigen::VectorXd standard_normal(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

Eigen::VectorXd standard_uniform(Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = unif(rng);
    return v;
}

Eigen::MatrixXd random_spd(Index m, std::mt19937_64& rng) {
    const Eigen::VectorXd z = standard_normal(m * m, rng);
    const Eigen::Map<const Eigen::MatrixXd> a(z.data(), m, m);
    Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(m);
    s.diagonal().array() += 0.5;
    return s / s(0, 0);
}

PartialArray delete_cells(const MultiwayArray& complete, const Eigen::VectorXd& u, double p) {
    if (u.size() != complete.size()) throw InvalidArgument("uniforms do not match the array size");
    PartialArray out{complete, ObservationMask::all_observed(complete.shape())};
    for (Index c = 0; c < complete.size(); ++c) {
        if (u[c] < p) {
            out.mask.set(c, false);
            out.values[c] = 0.0;
        }
    }
    return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidArgument("correlation inputs differ in length");
    const std::size_t n = a.size();
    if (n < 2) return kNaN;
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return kNaN;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw InvalidArgument("quantile of an empty set");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= values.size()) return values.back();
    return values[i] + frac * (values[i + 1] - values[i]);
}

BoxSummary box_summary(const std::vector<double>& values) {
    std::vector<double> v;
    for (double x : values) {
        if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) throw InvalidArgument("no finite values to summarize");
    std::sort(v.begin(), v.end());
    return {v.size(), v.front(), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), v.back()};
}

bool ModelSpec::any_known() const {
    return std::any_of(kernels.begin(), kernels.end(), [](const auto& k) { return k.has_value(); });
}

std::vector<DimensionSpec> ModelSpec::dimension_specs(const Shape& shape) const {
    if (static_cast<Index>(kernels.size()) != shape.order()) {
        throw InvalidArgument("model spec has " + std::to_string(kernels.size()) + " dimensions, data has " +
                              std::to_string(shape.order()));
    }
    std::vector<DimensionSpec> out;
    for (Index k = 0; k < shape.order(); ++k) {
        const auto& kernel = kernels[static_cast<std::size_t>(k)];
        if (kernel) {
            if (kernel->rows() != shape.dim(k)) {
                throw InvalidArgument("kernel " + std::to_string(k + 1) + " is " + std::to_string(kernel->rows()) +
                                      "x" + std::to_string(kernel->rows()) + ", dimension has " +
                                      std::to_string(shape.dim(k)) + " levels");
            }
            const double lambda =
                static_cast<std::size_t>(k) < initial_lambda.size() ? initial_lambda[static_cast<std::size_t>(k)] : 1.0;
            out.emplace_back(KnownKernel{*kernel, lambda});
        } else {
            out.emplace_back(Unstructured{Eigen::MatrixXd::Identity(shape.dim(k), shape.dim(k))});
        }
    }
    return out;
}

FitOutcome fit_model(const PartialSample& sample, const ModelSpec& spec) {
    validate_sample(sample);
    const Shape& shape = sample.front().shape();
    FitOutcome out;
    if (!spec.any_known()) {
        if (static_cast<Index>(spec.kernels.size()) != shape.order() && !spec.kernels.empty()) {
            throw InvalidArgument("model spec does not match the data order");
        }
        FitReport r = flip_flop_incomplete(sample, spec.flip_flop);
        out.implied = std::move(r.model);
        out.loglik_trace = std::move(r.loglik_trace);
        out.iterations = r.iterations;
        out.converged = r.converged;
        out.imputed = std::move(r.imputed);
        out.warnings = std::move(r.warnings);
        return out;
    }
    AvspmmConfig cfg = spec.avspmm;
    cfg.mean_model = spec.mean_model;
    cfg.mean_dimensions = spec.mean_dimensions;
    AvspmmReport r = fit_avspmm(sample, spec.dimension_specs(shape), cfg);
    out.implied = r.model.implied();
    out.avspmm = std::move(r.model);
    out.loglik_trace = std::move(r.loglik_trace);
    out.iterations = r.iterations;
    out.converged = r.converged;
    out.imputed = std::move(r.imputed);
    out.warnings = std::move(r.warnings);
    return out;
}

void apply_fit_settings(const Config& config, ModelSpec& spec) {
    const long max_it = config.get_int("max_iterations", spec.flip_flop.max_iterations);
    const double tol = config.get_double("rel_tol", spec.flip_flop.rel_tol);
    if (max_it < 1) throw ConfigError("max_iterations must be at least 1");
    if (!(tol > 0.0)) throw ConfigError("rel_tol must be positive");
    spec.flip_flop.max_iterations = spec.avspmm.max_iterations = static_cast<int>(max_it);
    spec.flip_flop.rel_tol = spec.avspmm.rel_tol = tol;

    const std::string estep = config.get("estep", "moments");
    if (estep == "moments") {
        spec.flip_flop.estep = spec.avspmm.estep = EStep::ConditionalMoments;
    } else if (estep == "mean") {
        spec.flip_flop.estep = spec.avspmm.estep = EStep::ConditionalMean;
    } else {
        throw ConfigError("estep must be 'moments' or 'mean', got '" + estep + "'");
    }
    const std::string route = config.get("route", "auto");
    if (route == "auto") {
        spec.flip_flop.route = spec.avspmm.route = ConditioningRoute::Automatic;
    } else if (route == "covariance") {
        spec.flip_flop.route = spec.avspmm.route = ConditioningRoute::Covariance;
    } else if (route == "precision") {
        spec.flip_flop.route = spec.avspmm.route = ConditioningRoute::Precision;
    } else {
        throw ConfigError("route must be auto, covariance or precision, got '" + route + "'");
    }
    spec.avspmm.search.lower = config.get_double("lambda_lower", spec.avspmm.search.lower);
    spec.avspmm.search.upper = config.get_double("lambda_upper", spec.avspmm.search.upper);
    spec.avspmm.search.grid_points = static_cast<int>(config.get_int("lambda_grid", spec.avspmm.search.grid_points));
    if (!(spec.avspmm.search.lower > 0.0) || !(spec.avspmm.search.upper > spec.avspmm.search.lower) ||
        spec.avspmm.search.grid_points < 3) {
        throw ConfigError("lambda search needs 0 < lambda_lower < lambda_upper and lambda_grid >= 3");
    }
}

std::string design_name(Design d) {
    switch (d) {
        case Design::Example1: return "example1";
        case Design::Example4: return "example4";
        case Design::MarkerCv: return "marker-cv";
    }
    return "unknown";
}

const std::set<std::string>& experiment_keys() {
    static const std::set<std::string> keys{
        "design",  "shape",      "sample_sizes", "missing",   "p1",           "markers",      "lambda",
        "trait_dim", "replications", "seed",      "threads",   "max_iterations", "rel_tol",     "estep",
        "route",   "lambda_lower", "lambda_upper", "lambda_grid", "out",         "format"};
    return keys;
}

ExperimentConfig ExperimentConfig::from_config(const Config& config) {
    ExperimentConfig c;
    const std::string design = config.get("design", "example1");
    if (design == "example1") {
        c.design = Design::Example1;
    } else if (design == "example4") {
        c.design = Design::Example4;
        c.shape = {6, 2};
        c.sample_sizes = {1};
        c.missing = {0.6, 0.4, 0.2, 0.1};
        c.p1_values = {50, 100, 200};
    } else if (design == "marker-cv") {
        c.design = Design::MarkerCv;
        c.shape = {2, 2, 5};
        c.sample_sizes = {1};
        c.missing = {0.1, 0.6};
        c.p1_values = {100};
    } else {
        throw ConfigError("design must be example1, example4 or marker-cv, got '" + design + "'");
    }
    c.shape = to_index(config.get_ints("shape", {c.shape.begin(), c.shape.end()}));
    c.sample_sizes = to_index(config.get_ints("sample_sizes", {c.sample_sizes.begin(), c.sample_sizes.end()}));
    c.missing = config.get_doubles("missing", c.missing);
    if (c.design != Design::Example1) c.p1_values = to_index(config.get_ints("p1", {c.p1_values.begin(), c.p1_values.end()}));
    c.markers = config.get_int("markers", c.markers);
    c.lambda = config.get_double("lambda", c.lambda);
    c.replications = static_cast<int>(config.get_int("replications", c.replications));
    c.seed = config.get_u64("seed", c.seed);
    c.threads = static_cast<int>(config.get_int("threads", c.threads));
    const Index order = static_cast<Index>(c.full_shape(c.p1_values.front()).size());
    c.trait_dim = config.get_int("trait_dim", order) - 1;

    const auto full = c.full_shape(c.p1_values.front());
    c.fit.kernels.assign(full.size(), std::nullopt);
    if (c.design != Design::Example1) {
        // Placeholder; each replication supplies its own kernel.
        c.fit.kernels[0] = Eigen::MatrixXd::Identity(1, 1);
        c.fit.initial_lambda.assign(full.size(), 1.0);
        c.fit.mean_model = MeanModel::Additive;
        c.fit.mean_dimensions.assign(full.size(), c.design == Design::Example4);
        if (c.design == Design::MarkerCv && c.trait_dim >= 0 && c.trait_dim < order) {
            c.fit.mean_dimensions[static_cast<std::size_t>(c.trait_dim)] = true;
        }
    }
    // N = 1 designs crawl near the optimum at high missingness; cap the default iteration budget.
    if (c.design != Design::Example1) c.fit.flip_flop.max_iterations = c.fit.avspmm.max_iterations = 100;
    apply_fit_settings(config, c.fit);
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (shape.empty()) throw ConfigError("shape must have at least one dimension");
    for (Index m : shape) {
        if (m < 1) throw ConfigError("shape entries must be positive");
    }
    if (sample_sizes.empty()) throw ConfigError("sample_sizes must not be empty");
    for (Index n : sample_sizes) {
        if (n < 1) throw ConfigError("sample sizes must be positive");
    }
    if (missing.empty()) throw ConfigError("missing must not be empty");
    for (double p : missing) {
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("missing probabilities must lie in [0, 1)");
    }
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (design != Design::Example1) {
        if (p1_values.empty()) throw ConfigError("p1 must not be empty");
        for (Index p1 : p1_values) {
            if (p1 < 2) throw ConfigError("p1 values must be at least 2");
        }
        if (markers < 1) throw ConfigError("markers must be positive");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
    }
    if (design == Design::MarkerCv) {
        const auto order = static_cast<Index>(shape.size()) + 1;
        if (trait_dim < 0 || trait_dim >= order) throw ConfigError("trait_dim out of range");
        for (double p : missing) {
            if (!(p > 0.0)) throw ConfigError("marker-cv holdout fractions must be positive");
        }
    }
}

std::vector<Index> ExperimentConfig::full_shape(Index p1) const {
    if (design == Design::Example1) return shape;
    std::vector<Index> out{p1};
    out.insert(out.end(), shape.begin(), shape.end());
    return out;
}

SimulatedReplication simulate_replication(const ExperimentConfig& config, Index p1, Index n, int replication) {
    const Shape shape(config.full_shape(p1));
    const auto purpose = static_cast<std::uint64_t>(config.design == Design::Example1 ? 0 : p1);
    SimulatedReplication out;

    if (config.design == Design::Example1) {
        auto truth_rng = stream_rng(config.seed, 0, 1);
        MultiwayArray mean(shape, standard_normal(shape.size(), truth_rng));
        std::vector<CovarianceFactor> f;
        for (Index k = 0; k < shape.order(); ++k) f.emplace_back(random_spd(shape.dim(k), truth_rng), k);
        out.truth = {std::move(mean), KroneckerCovariance(std::move(f))};
    } else {
        // Fixed across replications: the unstructured factors and the coefficients of dimensions 2..i.
        auto truth_rng = stream_rng(config.seed, 0, 2);
        AvspmmModel m;
        m.sigma2 = 1.0;
        std::vector<bool> included(static_cast<std::size_t>(shape.order()), config.design == Design::Example4);
        if (config.design == Design::MarkerCv) included[static_cast<std::size_t>(config.trait_dim)] = true;
        m.mean = AdditiveMean::zero(shape, included);
        m.specs.emplace_back(KnownKernel{Eigen::MatrixXd::Identity(p1, p1), config.lambda});
        for (Index k = 1; k < shape.order(); ++k) {
            m.specs.emplace_back(Unstructured{random_spd(shape.dim(k), truth_rng)});
            Eigen::VectorXd beta = standard_normal(shape.dim(k), truth_rng);
            if (included[static_cast<std::size_t>(k)]) m.mean.betas[static_cast<std::size_t>(k)] = beta;
        }
        auto beta_rng = stream_rng(config.seed, 0, 3 + static_cast<std::uint64_t>(p1));
        if (included[0]) m.mean.betas[0] = standard_normal(p1, beta_rng);

        auto rng = stream_rng(config.seed, static_cast<std::uint64_t>(replication) + 1, purpose);
        std::get<KnownKernel>(m.specs[0]).kernel = marker_kernel(random_sign_markers(p1, config.markers, rng));
        out.truth = m.implied();
        out.truth_avspmm = std::move(m);
    }

    auto rng = stream_rng(config.seed, static_cast<std::uint64_t>(replication) + 1, 1000 + purpose);
    out.complete = sample(out.truth, rng, n);
    for (Index l = 0; l < n; ++l) out.uniforms.push_back(standard_uniform(shape.size(), rng));
    return out;
}

namespace {

struct Score {
    double correlation = kNaN;
    std::vector<double> slices;
};

// Correlation between reference and imputed values over the deleted cells, optionally per slice.
Score score_cells(const std::vector<MultiwayArray>& reference, const std::vector<MultiwayArray>& imputed,
                  const std::vector<std::vector<Index>>& deleted, Index trait_dim) {
    const Shape& shape = reference.front().shape();
    const Index groups = trait_dim >= 0 ? shape.dim(trait_dim) : 1;
    std::vector<std::vector<double>> truth(static_cast<std::size_t>(groups));
    std::vector<std::vector<double>> fitted(static_cast<std::size_t>(groups));
    std::vector<Index> idx(static_cast<std::size_t>(shape.order()));
    for (std::size_t l = 0; l < reference.size(); ++l) {
        for (Index c : deleted[l]) {
            Index g = 0;
            if (trait_dim >= 0) {
                shape.unravel(c, idx);
                g = idx[static_cast<std::size_t>(trait_dim)];
            }
            truth[static_cast<std::size_t>(g)].push_back(reference[l][c]);
            fitted[static_cast<std::size_t>(g)].push_back(imputed[l][c]);
        }
    }
    Score s;
    if (trait_dim < 0) {
        s.correlation = pearson(truth[0], fitted[0]);
        return s;
    }
    double sum = 0.0;
    int count = 0;
    for (Index g = 0; g < groups; ++g) {
        const double r = pearson(truth[static_cast<std::size_t>(g)], fitted[static_cast<std::size_t>(g)]);
        s.slices.push_back(r);
        if (!std::isnan(r)) {
            sum += r;
            ++count;
        }
    }
    s.correlation = count > 0 ? sum / count : kNaN;
    return s;
}

ModelSpec spec_for_replication(const ExperimentConfig& config, const SimulatedReplication& sim) {
    ModelSpec spec = config.fit;
    if (sim.truth_avspmm) spec.kernels[0] = std::get<KnownKernel>(sim.truth_avspmm->specs[0]).kernel;
    return spec;
}

void fill_failure(MetricsRecord& r, const std::exception& e) {
    r.error = e.what();
    r.correlation = kNaN;
    r.mse = kNaN;
    r.iterations = 0;
    r.converged = false;
    r.slice_correlations.clear();
}

}  // namespace

std::vector<MetricsRecord> run_experiment(const ExperimentConfig& config) {
    config.validate();
    const Index n_max = *std::max_element(config.sample_sizes.begin(), config.sample_sizes.end());
    const int tasks = static_cast<int>(config.p1_values.size()) * config.replications;
    std::vector<std::vector<MetricsRecord>> per_task(static_cast<std::size_t>(tasks));

    parallel_for(tasks, config.threads, [&](int t) {
        const Index p1 = config.p1_values[static_cast<std::size_t>(t / config.replications)];
        const int rep = t % config.replications;
        const SimulatedReplication sim = simulate_replication(config, p1, n_max, rep);
        const ModelSpec spec = spec_for_replication(config, sim);
        const Index trait = config.design == Design::MarkerCv ? config.trait_dim : -1;

        for (Index n : config.sample_sizes) {
            for (double p : config.missing) {
                MetricsRecord r;
                r.design = design_name(config.design);
                r.p1 = config.design == Design::Example1 ? 0 : p1;
                r.n = n;
                r.missing = p;
                r.replication = rep + 1;
                PartialSample data;
                std::vector<MultiwayArray> reference;
                std::vector<std::vector<Index>> deleted;
                for (Index l = 0; l < n; ++l) {
                    data.push_back(delete_cells(sim.complete[static_cast<std::size_t>(l)],
                                                sim.uniforms[static_cast<std::size_t>(l)], p));
                    reference.push_back(sim.complete[static_cast<std::size_t>(l)]);
                    deleted.push_back(data.back().mask.missing_cells());
                }
                const auto start = std::chrono::steady_clock::now();
                try {
                    const FitOutcome fit = fit_model(data, spec);
                    const Score s = score_cells(reference, fit.imputed, deleted, trait);
                    r.correlation = s.correlation;
                    r.slice_correlations = s.slices;
                    r.mse = kronecker_mse(fit.implied.covariance, sim.truth.covariance);
                    r.iterations = fit.iterations;
                    r.converged = fit.converged;
                } catch (const NumericalError& e) {
                    fill_failure(r, e);
                } catch (const InvalidArgument& e) {
                    fill_failure(r, e);
                }
                r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                per_task[static_cast<std::size_t>(t)].push_back(std::move(r));
            }
        }
    });

    std::vector<MetricsRecord> out;
    for (auto& v : per_task) {
        for (auto& r : v) out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
        return std::tie(a.p1, a.n, a.missing, a.replication) < std::tie(b.p1, b.n, b.missing, b.replication);
    });
    return out;
}

std::vector<MetricsRecord> run_cv(const PartialSample& data, const ModelSpec& spec, const CvConfig& config) {
    const auto never = validate_sample(data);
    (void)never;
    if (config.holdout.empty()) throw ConfigError("holdout must list at least one fraction");
    for (double h : config.holdout) {
        if (!(h > 0.0 && h < 1.0)) throw ConfigError("holdout fractions must lie in (0, 1); nothing to score otherwise");
    }
    if (config.replications < 1) throw ConfigError("replications must be at least 1");
    if (config.threads < 1) throw ConfigError("threads must be at least 1");
    const Shape& shape = data.front().shape();
    if (config.trait_dim >= shape.order()) throw ConfigError("trait_dim out of range");
    Index total_observed = 0;
    for (const auto& obs : data) total_observed += obs.mask.count_observed();
    if (total_observed < 2) throw InvalidArgument("too few observed cells to hold out");

    std::vector<std::vector<MetricsRecord>> per_rep(static_cast<std::size_t>(config.replications));
    parallel_for(config.replications, config.threads, [&](int rep) {
        auto rng = stream_rng(config.seed, static_cast<std::uint64_t>(rep) + 1, 7);
        std::vector<Eigen::VectorXd> u;
        for (std::size_t l = 0; l < data.size(); ++l) u.push_back(standard_uniform(shape.size(), rng));
        for (double h : config.holdout) {
            MetricsRecord r;
            r.design = "cv";
            r.p1 = shape.dim(0);
            r.n = static_cast<Index>(data.size());
            r.missing = h;
            r.replication = rep + 1;
            r.mse = kNaN;
            PartialSample reduced = data;
            std::vector<MultiwayArray> reference;
            std::vector<std::vector<Index>> deleted(data.size());
            for (std::size_t l = 0; l < data.size(); ++l) {
                reference.push_back(data[l].values);
                for (Index c = 0; c < shape.size(); ++c) {
                    if (data[l].mask.observed(c) && u[l][c] < h) {
                        reduced[l].mask.set(c, false);
                        reduced[l].values[c] = 0.0;
                        deleted[l].push_back(c);
                    }
                }
            }
            const auto start = std::chrono::steady_clock::now();
            try {
                const FitOutcome fit = fit_model(reduced, spec);
                const Score s = score_cells(reference, fit.imputed, deleted, config.trait_dim);
                r.correlation = s.correlation;
                r.slice_correlations = s.slices;
                r.iterations = fit.iterations;
                r.converged = fit.converged;
            } catch (const NumericalError& e) {
                fill_failure(r, e);
            }
            r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            per_rep[static_cast<std::size_t>(rep)].push_back(std::move(r));
        }
    });

    std::vector<MetricsRecord> out;
    for (auto& v : per_rep) {
        for (auto& r : v) out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
        return std::tie(a.missing, a.replication) < std::tie(b.missing, b.replication);
    });
    return out;
}

}  // namespace arrayem
