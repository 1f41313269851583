#include "arrayem/avspmm.hpp"

#include <cmath>

namespace arrayem {

Index spec_order(const DimensionSpec& s) {
    if (const auto* known = std::get_if<KnownKernel>(&s)) return known->kernel.rows();
    return std::get<Unstructured>(s).sigma.rows();
}

AdditiveMean AdditiveMean::zero(const Shape& shape, std::vector<bool> included) {
    if (included.empty()) included.assign(static_cast<std::size_t>(shape.order()), true);
    if (static_cast<Index>(included.size()) != shape.order()) {
        throw InvalidArgument("mean inclusion flags do not match the array order");
    }
    AdditiveMean out;
    for (Index k = 0; k < shape.order(); ++k) out.betas.push_back(Eigen::VectorXd::Zero(shape.dim(k)));
    out.included = std::move(included);
    return out;
}

Index AdditiveMean::reference() const {
    for (std::size_t k = 0; k < included.size(); ++k) {
        if (included[k]) return static_cast<Index>(k);
    }
    return -1;
}

void AdditiveMean::validate(const Shape& shape) const {
    if (static_cast<Index>(betas.size()) != shape.order() || betas.size() != included.size()) {
        throw InvalidArgument("additive mean has the wrong number of coefficient vectors");
    }
    for (Index k = 0; k < shape.order(); ++k) {
        const auto& b = betas[static_cast<std::size_t>(k)];
        if (b.size() != shape.dim(k)) {
            throw InvalidArgument("beta " + std::to_string(k + 1) + " has length " + std::to_string(b.size()) +
                                  ", expected " + std::to_string(shape.dim(k)));
        }
        if (!b.allFinite()) throw InvalidArgument("beta " + std::to_string(k + 1) + " is not finite");
        if (!included[static_cast<std::size_t>(k)] && !b.isZero(0.0)) {
            throw InvalidArgument("excluded beta " + std::to_string(k + 1) + " must be zero");
        }
    }
}

MultiwayArray additive_mean_array(const AdditiveMean& mean, const Shape& shape) {
    mean.validate(shape);
    MultiwayArray out(shape);
    std::vector<Index> idx(static_cast<std::size_t>(shape.order()));
    for (Index c = 0; c < shape.size(); ++c) {
        shape.unravel(c, idx);
        double v = 0.0;
        for (Index k = 0; k < shape.order(); ++k) {
            v += mean.betas[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
        }
        out[c] = v;
    }
    return out;
}

Shape AvspmmModel::shape() const {
    std::vector<Index> dims;
    for (const auto& s : specs) dims.push_back(spec_order(s));
    return Shape(std::move(dims));
}

Index AvspmmModel::first_known() const {
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (is_known(specs[k])) return static_cast<Index>(k);
    }
    return -1;
}

MultiwayArray AvspmmModel::mean_array() const {
    if (cellwise_mean) return *cellwise_mean;
    return additive_mean_array(mean, shape());
}

Eigen::MatrixXd AvspmmModel::factor_sigma(Index k) const {
    const auto& s = specs.at(static_cast<std::size_t>(k));
    if (const auto* known = std::get_if<KnownKernel>(&s)) {
        Eigen::MatrixXd h = known->kernel;
        h.diagonal().array() += known->lambda;
        if (k == first_known()) h *= sigma2;
        return h;
    }
    return std::get<Unstructured>(s).sigma;
}

KroneckerCovariance AvspmmModel::covariance() const {
    std::vector<CovarianceFactor> f;
    for (Index k = 0; k < static_cast<Index>(specs.size()); ++k) f.emplace_back(factor_sigma(k), k);
    return KroneckerCovariance(std::move(f));
}

ArrayNormalModel AvspmmModel::implied() const { return {mean_array(), covariance()}; }

void AvspmmModel::validate() const {
    if (specs.empty()) throw InvalidArgument("model needs at least one dimension");
    const Shape s = shape();
    const Index known0 = first_known();
    if (known0 >= 0 && !(sigma2 > 0.0 && std::isfinite(sigma2))) throw InvalidArgument("sigma^2 must be positive");
    if (known0 < 0 && sigma2 != 1.0) throw InvalidArgument("sigma^2 is fixed at 1 without a Known dimension");
    for (Index k = 0; k < s.order(); ++k) {
        const auto& spec = specs[static_cast<std::size_t>(k)];
        if (const auto* known = std::get_if<KnownKernel>(&spec)) {
            if (known->kernel.rows() != known->kernel.cols()) throw InvalidArgument("kernel must be square");
            if (!(known->lambda >= 0.0) || !std::isfinite(known->lambda)) {
                throw InvalidArgument("lambda " + std::to_string(k + 1) + " must be non-negative");
            }
        } else {
            const auto& sigma = std::get<Unstructured>(spec).sigma;
            if (sigma.rows() != sigma.cols()) throw InvalidArgument("sigma must be square");
            const bool carries_scale = known0 < 0 && k == 0;
            if (!carries_scale && std::abs(sigma(0, 0) - 1.0) > 1e-10) {
                throw InvalidArgument("sigma " + std::to_string(k + 1) + " must have a unit (1,1) entry");
            }
        }
    }
    if (cellwise_mean) {
        if (!(cellwise_mean->shape() == s)) throw InvalidArgument("cellwise mean shape does not match the model");
    } else {
        mean.validate(s);
    }
    (void)covariance();
}

Eigen::VectorXd estimate_beta_k(std::span<const MultiwayArray> arrays, const AvspmmModel& model, Index k) {
    if (arrays.empty()) throw InvalidArgument("no arrays for the mean update");
    const Shape s = model.shape();
    if (k < 0 || k >= s.order()) throw InvalidArgument("mode out of range");
    AdditiveMean others = model.mean;
    others.betas[static_cast<std::size_t>(k)].setZero();
    const MultiwayArray partial_mean = additive_mean_array(others, s);

    MultiwayArray r(s);
    for (const auto& x : arrays) {
        if (!(x.shape() == s)) throw InvalidArgument("array shape does not match the model");
        r += x;
    }
    r -= MultiwayArray(s, partial_mean.values() * static_cast<double>(arrays.size()));

    double denom = static_cast<double>(arrays.size());
    for (Index j = 0; j < s.order(); ++j) {
        if (j == k) continue;
        const Eigen::MatrixXd sigma = model.factor_sigma(j);
        Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success) throw NotPositiveDefinite(j, "covariance factor is not positive definite");
        const Eigen::VectorXd w = llt.solve(Eigen::VectorXd::Ones(s.dim(j)));
        denom *= w.sum();
        r = mode_multiply(r, w.transpose(), j);
    }
    return r.values() / denom;
}

void AvspmmConfig::validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be at least 1");
    if (!(rel_tol > 0.0)) throw InvalidArgument("rel_tol must be positive");
    if (!(search.lower > 0.0) || !(search.upper > search.lower) || search.grid_points < 3) {
        throw InvalidArgument("invalid lambda search interval");
    }
}

namespace {

struct EStepResult {
    std::vector<ConditionalMoments> moments;
    double loglik = 0.0;
};

EStepResult run_estep(const PartialSample& sample, const ArrayNormalModel& model, const AvspmmConfig& config,
                      int iteration) {
    EStepResult out;
    out.moments.reserve(sample.size());
    const bool with_cov = config.estep == EStep::ConditionalMoments;
    try {
        for (std::size_t l = 0; l < sample.size(); ++l) {
            out.moments.push_back(
                condition_on_observed(sample[l], model, with_cov, config.route, static_cast<Index>(l)));
            out.loglik += out.moments.back().loglik;
        }
    } catch (const ConditioningError& e) {
        if (iteration == 0) throw;
        throw ConditioningError(e.observation(), "iteration " + std::to_string(iteration) + ": " + e.detail());
    }
    return out;
}

// Moves a constant shift of every non-reference beta into the reference beta; M is unchanged.
void recenter(AdditiveMean& mean) {
    const Index ref = mean.reference();
    if (ref < 0) return;
    for (std::size_t k = 0; k < mean.betas.size(); ++k) {
        if (!mean.included[k] || static_cast<Index>(k) == ref) continue;
        const double shift = mean.betas[k].mean();
        mean.betas[k].array() -= shift;
        mean.betas[static_cast<std::size_t>(ref)].array() += shift;
    }
}

void set_known_lambda(AvspmmModel& model, Index k, double lambda) {
    std::get<KnownKernel>(model.specs[static_cast<std::size_t>(k)]).lambda = lambda;
}

// Scale-free starting values: grand mean in the reference beta, sigma^2 matched to the observed variance.
AvspmmModel starting_model(const PartialSample& sample, std::vector<DimensionSpec> specs, const AvspmmConfig& config) {
    const Shape& shape = sample.front().shape();
    AvspmmModel model;
    model.specs = std::move(specs);
    if (!(model.shape() == shape)) throw InvalidArgument("dimension specs do not match the data shape");

    for (Index k = 0; k < shape.order(); ++k) {
        auto& spec = model.specs[static_cast<std::size_t>(k)];
        if (auto* u = std::get_if<Unstructured>(&spec)) {
            (void)CovarianceFactor(u->sigma, k);
            const bool carries_scale = model.first_known() < 0 && k == 0;
            if (!carries_scale) u->sigma /= u->sigma(0, 0);
        } else {
            (void)KronEigenWorkspace(std::get<KnownKernel>(spec).kernel, 1);
        }
    }

    double sum = 0.0;
    double sum_sq = 0.0;
    double count = 0.0;
    for (const auto& obs : sample) {
        for (Index c = 0; c < shape.size(); ++c) {
            if (!obs.mask.observed(c)) continue;
            sum += obs.values[c];
            sum_sq += obs.values[c] * obs.values[c];
            count += 1.0;
        }
    }
    const double grand = count > 0 ? sum / count : 0.0;

    if (config.mean_model == MeanModel::Cellwise) {
        model.mean = AdditiveMean::zero(shape, std::vector<bool>(static_cast<std::size_t>(shape.order()), false));
        model.cellwise_mean = initial_model(sample, InitPolicy::SampleMoment).mean;
    } else {
        model.mean = AdditiveMean::zero(shape, config.mean_dimensions);
        const Index ref = model.mean.reference();
        if (ref >= 0) model.mean.betas[static_cast<std::size_t>(ref)].setConstant(grand);
    }

    const Index known0 = model.first_known();
    if (known0 >= 0) {
        const double var = count > 1 ? (sum_sq - count * grand * grand) / (count - 1) : 1.0;
        double diag = 1.0;
        model.sigma2 = 1.0;
        for (Index k = 0; k < shape.order(); ++k) diag *= model.factor_sigma(k).diagonal().mean();
        model.sigma2 = var > 0 && diag > 0 ? var / diag : 1.0;
    }
    return model;
}

}  // namespace

AvspmmReport fit_avspmm(const PartialSample& sample, const std::vector<DimensionSpec>& specs,
                        const AvspmmConfig& config) {
    config.validate();
    const auto never_observed = validate_sample(sample);
    const Shape& shape = sample.front().shape();

    AvspmmReport report;
    if (!never_observed.empty()) {
        report.warnings.push_back(std::to_string(never_observed.size()) +
                                  " cell(s) are missing in every observation; their imputations follow the model");
    }
    AvspmmModel model;
    if (config.warm_start) {
        model = *config.warm_start;
        model.validate();
        if (!(model.shape() == shape)) throw InvalidArgument("warm start shape does not match the data");
        if (config.mean_model == MeanModel::Cellwise && !model.cellwise_mean) model.cellwise_mean = model.mean_array();
    } else {
        model = starting_model(sample, specs, config);
    }
    model.validate();

    const Index order = shape.order();
    const Index n = static_cast<Index>(sample.size());
    const Index known0 = model.first_known();
    std::vector<KronEigenWorkspace> workspaces(static_cast<std::size_t>(order));
    for (Index k = 0; k < order; ++k) {
        if (const auto* known = std::get_if<KnownKernel>(&model.specs[static_cast<std::size_t>(k)])) {
            workspaces[static_cast<std::size_t>(k)] = KronEigenWorkspace(known->kernel, n * shape.complement(k));
        }
    }
    report.lambda_at_boundary.assign(static_cast<std::size_t>(order), false);

    EStepResult estep = run_estep(sample, model.implied(), config, 0);
    report.loglik_trace.push_back(estep.loglik);

    for (int it = 0; it < config.max_iterations; ++it) {
        std::vector<MultiwayArray> imputed;
        imputed.reserve(sample.size());
        for (const auto& m : estep.moments) imputed.push_back(m.mean);

        // Mean.
        if (model.cellwise_mean) {
            model.cellwise_mean = update_mean(imputed);
        } else {
            for (Index k = 0; k < order; ++k) {
                if (!model.mean.included[static_cast<std::size_t>(k)]) continue;
                model.mean.betas[static_cast<std::size_t>(k)] = estimate_beta_k(imputed, model, k);
                recenter(model.mean);
            }
        }
        const MultiwayArray mean = model.mean_array();
        std::vector<MultiwayArray> residuals;
        residuals.reserve(imputed.size());
        for (const auto& x : imputed) residuals.push_back(x - mean);

        // Covariance, one dimension at a time against the latest other factors.
        for (Index k = 0; k < order; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            const KroneckerCovariance cov = model.covariance();
            const Index columns = n * shape.complement(k);
            const Eigen::MatrixXd scatter = expected_mode_scatter(residuals, estep.moments, cov.factors(), k);

            if (auto* known = std::get_if<KnownKernel>(&model.specs[kk])) {
                const auto& ws = workspaces[kk];
                const Eigen::VectorXd sums = ws.rotated_square_sums(scatter);
                LambdaOptimum best = optimize_lambda_k_from_sums(sums, ws, config.search);
                const ProfileValue current = array_profile_loglik_from_sums(known->lambda, sums, ws);
                if (current.loglik >= best.loglik) {
                    best.lambda = known->lambda;
                    best.sigma2 = current.sigma2;
                } else {
                    report.lambda_at_boundary[kk] = best.at_boundary;
                }
                // The scatter was whitened with sigma^2 in place when k is not the carrier.
                const double carrier = k == known0 ? best.sigma2 : model.sigma2 * best.sigma2;
                set_known_lambda(model, k, best.lambda);
                model.sigma2 = carrier;
            } else {
                if (columns < shape.dim(k)) {
                    throw RankDeficient(k, "iteration " + std::to_string(it + 1) + ": " + std::to_string(columns) +
                                               " effective columns for a " + std::to_string(shape.dim(k)) + "x" +
                                               std::to_string(shape.dim(k)) + " covariance");
                }
                Eigen::MatrixXd sigma = scatter / static_cast<double>(columns);
                try {
                    (void)CovarianceFactor(sigma, k);
                } catch (const NotPositiveDefinite&) {
                    throw RankDeficient(k, "iteration " + std::to_string(it + 1) +
                                               ": covariance update is not positive definite");
                }
                auto& target = std::get<Unstructured>(model.specs[kk]).sigma;
                if (known0 >= 0) {
                    const double c = sigma(0, 0);
                    target = sigma / c;
                    model.sigma2 *= c;
                } else if (k == 0) {
                    target = sigma;
                } else {
                    const double c = sigma(0, 0);
                    target = sigma / c;
                    std::get<Unstructured>(model.specs[0]).sigma *= c;
                }
            }
        }
        report.iterations = it + 1;

        estep = run_estep(sample, model.implied(), config, it + 1);
        const double previous = report.loglik_trace.back();
        report.loglik_trace.push_back(estep.loglik);
        if (std::abs(estep.loglik - previous) < config.rel_tol * std::abs(previous)) {
            report.converged = true;
            break;
        }
    }

    for (auto& m : estep.moments) report.imputed.push_back(std::move(m.mean));
    report.model = std::move(model);
    return report;
}

}  // namespace arrayem
