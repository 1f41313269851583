#include "arrayem/missing_em.hpp"

#include <cmath>

namespace arrayem {

void FitConfig::validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be at least 1");
    if (!(rel_tol > 0.0)) throw InvalidArgument("rel_tol must be positive");
}

MultiwayArray conditional_mean_impute(const PartialArray& obs, const ArrayNormalModel& model, Index observation) {
    obs.validate();
    return condition_on_observed(obs, model, false, ConditioningRoute::Automatic, observation).mean;
}

double observed_loglik(const PartialSample& sample, const ArrayNormalModel& model) {
    validate_sample(sample);
    double total = 0.0;
    for (std::size_t l = 0; l < sample.size(); ++l) {
        total += condition_on_observed(sample[l], model, false, ConditioningRoute::Automatic, static_cast<Index>(l)).loglik;
    }
    return total;
}

MultiwayArray update_mean(std::span<const MultiwayArray> imputed) {
    if (imputed.empty()) throw InvalidArgument("no arrays to average");
    MultiwayArray sum(imputed.front().shape());
    for (const auto& x : imputed) sum += x;
    sum.values() /= static_cast<double>(imputed.size());
    return sum;
}

std::vector<MultiwayArray> whiten_except(std::span<const MultiwayArray> arrays, const ArrayNormalModel& model,
                                         Index k) {
    model.validate();
    if (k < 0 || k >= model.shape().order()) throw InvalidArgument("mode out of range");
    std::vector<MultiwayArray> out;
    out.reserve(arrays.size());
    for (const auto& x : arrays) {
        MultiwayArray z = x - model.mean;
        for (Index j = 0; j < model.shape().order(); ++j) {
            if (j != k) z = mode_solve_lower(z, model.covariance.factor(j).root(), j);
        }
        out.push_back(std::move(z));
    }
    return out;
}

Eigen::MatrixXd update_sigma_k(std::span<const MultiwayArray> whitened, Index k) {
    if (whitened.empty()) throw InvalidArgument("no arrays for the covariance update");
    const Shape& shape = whitened.front().shape();
    const Index mk = shape.dim(k);
    const Index columns = static_cast<Index>(whitened.size()) * shape.complement(k);
    if (columns < mk) {
        throw RankDeficient(k, std::to_string(columns) + " effective columns for a " + std::to_string(mk) + "x" +
                                   std::to_string(mk) + " covariance");
    }
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(mk, mk);
    for (const auto& z : whitened) {
        const Eigen::MatrixXd zk = matricize(z, k);
        s.noalias() += zk * zk.transpose();
    }
    return s / static_cast<double>(columns);
}

KroneckerCovariance normalize_factors(const KroneckerCovariance& cov) {
    std::vector<CovarianceFactor> f = cov.factors();
    for (std::size_t k = 1; k < f.size(); ++k) {
        const double c = f[k].sigma()(0, 0);
        f[k] = f[k].scaled(1.0 / c);
        f[0] = f[0].scaled(c);
    }
    return KroneckerCovariance(std::move(f));
}

ArrayNormalModel initial_model(const PartialSample& sample, InitPolicy policy) {
    validate_sample(sample);
    const Shape& shape = sample.front().shape();
    MultiwayArray mean(shape);
    if (policy == InitPolicy::SampleMoment) {
        Eigen::VectorXd count = Eigen::VectorXd::Zero(shape.size());
        for (const auto& obs : sample) {
            for (Index c = 0; c < shape.size(); ++c) {
                if (obs.mask.observed(c)) {
                    mean[c] += obs.values[c];
                    count[c] += 1.0;
                }
            }
        }
        for (Index c = 0; c < shape.size(); ++c) {
            if (count[c] > 0) mean[c] /= count[c];
        }
    }
    return {std::move(mean), KroneckerCovariance::identity(shape)};
}

namespace {

struct EStepResult {
    std::vector<ConditionalMoments> moments;
    double loglik = 0.0;
};

EStepResult run_estep(const PartialSample& sample, const ArrayNormalModel& model, const FitConfig& config) {
    EStepResult out;
    out.moments.reserve(sample.size());
    const bool with_cov = config.estep == EStep::ConditionalMoments;
    for (std::size_t l = 0; l < sample.size(); ++l) {
        out.moments.push_back(condition_on_observed(sample[l], model, with_cov, config.route, static_cast<Index>(l)));
        out.loglik += out.moments.back().loglik;
    }
    return out;
}

Eigen::MatrixXd covariance_update(const std::vector<MultiwayArray>& residuals,
                                  const std::vector<ConditionalMoments>& moments, const KroneckerCovariance& cov,
                                  Index k, int iteration) {
    const Shape shape = cov.shape();
    const Index columns = static_cast<Index>(residuals.size()) * shape.complement(k);
    if (columns < shape.dim(k)) {
        throw RankDeficient(k, "iteration " + std::to_string(iteration) + ": " + std::to_string(columns) +
                                   " effective columns for a " + std::to_string(shape.dim(k)) + "x" +
                                   std::to_string(shape.dim(k)) + " covariance");
    }
    return expected_mode_scatter(residuals, moments, cov.factors(), k) / static_cast<double>(columns);
}

CovarianceFactor checked_factor(Eigen::MatrixXd sigma, Index k, int iteration) {
    try {
        return CovarianceFactor(std::move(sigma), k);
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient(k, "iteration " + std::to_string(iteration) + ": covariance update is not positive definite");
    }
}

}  // namespace

FitReport flip_flop_incomplete(const PartialSample& sample, const FitConfig& config) {
    config.validate();
    const auto never_observed = validate_sample(sample);
    const Shape& shape = sample.front().shape();

    FitReport report;
    if (!never_observed.empty()) {
        report.warnings.push_back(std::to_string(never_observed.size()) +
                                  " cell(s) are missing in every observation; their imputations follow the mean");
    }
    ArrayNormalModel model;
    if (config.warm_start) {
        model = *config.warm_start;
        model.validate();
        if (!(model.shape() == shape)) throw InvalidArgument("warm start shape does not match the data");
    } else {
        model = initial_model(sample, config.init);
    }

    EStepResult estep = run_estep(sample, model, config);
    report.loglik_trace.push_back(estep.loglik);

    for (int it = 0; it < config.max_iterations; ++it) {
        std::vector<MultiwayArray> imputed;
        imputed.reserve(sample.size());
        for (const auto& m : estep.moments) imputed.push_back(m.mean);
        model.mean = update_mean(imputed);

        std::vector<MultiwayArray> residuals;
        residuals.reserve(imputed.size());
        for (const auto& x : imputed) residuals.push_back(x - model.mean);

        for (Index k = 0; k < shape.order(); ++k) {
            model.covariance.set_factor(
                k, checked_factor(covariance_update(residuals, estep.moments, model.covariance, k, it + 1), k, it + 1));
        }
        model.covariance = normalize_factors(model.covariance);
        report.iterations = it + 1;

        try {
            estep = run_estep(sample, model, config);
        } catch (const ConditioningError& e) {
            throw ConditioningError(e.observation(), "iteration " + std::to_string(it + 1) + ": " + e.detail());
        }
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
