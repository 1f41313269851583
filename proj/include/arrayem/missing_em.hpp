#pragma once

#include <optional>
#include <string>
#include <vector>

#include "arrayem/array_normal.hpp"
#include "arrayem/conditional.hpp"
#include "arrayem/partial.hpp"

namespace arrayem {

enum class InitPolicy {
    /// Cellwise mean over observed values (0 for never-observed cells), identity factors.
    SampleMoment,
    /// Zero mean, identity factors.
    ZeroMeanIdentity,
};

enum class EStep {
    /// Conditional means plus conditional covariances of the missing cells (exact EM statistics).
    ConditionalMoments,
    /// Conditional means only; covariance updates see the imputed arrays as if complete.
    ConditionalMean,
};

struct FitConfig {
    int max_iterations = 200;
    /// Stop when |l_t - l_{t-1}| < rel_tol * |l_{t-1}| for the observed-data log-likelihood l.
    double rel_tol = 1e-6;
    InitPolicy init = InitPolicy::SampleMoment;
    EStep estep = EStep::ConditionalMoments;
    ConditioningRoute route = ConditioningRoute::Automatic;
    /// Starting parameters; overrides `init` when set.
    std::optional<ArrayNormalModel> warm_start;

    void validate() const;
};

struct FitReport {
    ArrayNormalModel model;
    /// Observed-data log-likelihood at the initial parameters and after every iteration.
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    /// Conditional means at the final parameters, one per observation.
    std::vector<MultiwayArray> imputed;
    std::vector<std::string> warnings;
};

/// E[X | x_r] under `model` (observed cells are returned unchanged).
[[nodiscard]] MultiwayArray conditional_mean_impute(const PartialArray& obs, const ArrayNormalModel& model,
                                                    Index observation = 0);

/// Sum over observations of the log density of the observed cells.
[[nodiscard]] double observed_loglik(const PartialSample& sample, const ArrayNormalModel& model);

/// Cellwise average.
[[nodiscard]] MultiwayArray update_mean(std::span<const MultiwayArray> imputed);

/// Each array minus the model mean, then multiplied by A_j^{-1} on every mode j != k.
[[nodiscard]] std::vector<MultiwayArray> whiten_except(std::span<const MultiwayArray> arrays,
                                                       const ArrayNormalModel& model, Index k);

/// (1 / (N prod_{j != k} m_j)) sum_q z_q z_q^T over the mode-k columns of the whitened arrays.
[[nodiscard]] Eigen::MatrixXd update_sigma_k(std::span<const MultiwayArray> whitened, Index k);

/**
 * Rescales factors 1..i-1 to a unit (0,0) entry, moving the scale into factor 0.
 * The implied Lambda is unchanged.
 */
[[nodiscard]] KroneckerCovariance normalize_factors(const KroneckerCovariance& cov);

/// Initial parameters per `policy`.
[[nodiscard]] ArrayNormalModel initial_model(const PartialSample& sample, InitPolicy policy);

/// Flip-Flop estimation for partially observed arrays.
[[nodiscard]] FitReport flip_flop_incomplete(const PartialSample& sample, const FitConfig& config = {});

}  // namespace arrayem
