#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arrayem/array_normal.hpp"
#include "arrayem/partial.hpp"

namespace arrayem {

/**
 * How the observed-data conditional is computed.
 *
 * Covariance factors R Lambda R^T (size = observed count). Precision works with the
 * missing block of Lambda^{-1} = ⊗ Sigma_k^{-1} (size = missing count) via the Schur
 * complement. Both give the same moments and log-likelihood; Automatic picks the
 * smaller factorization.
 */
enum class ConditioningRoute { Automatic, Covariance, Precision };

/// Moments of one array given its observed cells.
struct ConditionalMoments {
    /// E[X | x_r]; observed cells hold the observed values exactly.
    MultiwayArray mean;
    /// Canonical offsets of the missing cells, increasing.
    std::vector<Index> missing;
    /// cov(x_m | x_r) over `missing`, or empty when not requested.
    Eigen::MatrixXd covariance;
    /// Log density of the observed cells (0 when nothing is observed).
    double loglik = 0.0;
};

/**
 * Conditional mean rvec(M) + Lambda R^T (R Lambda R^T)^{-1} (x_r - R rvec(M)),
 * optionally with the conditional covariance of the missing cells.
 *
 * Lambda is never materialized; entries are generated from the factors on demand.
 * Throws ConditioningError (tagged with `observation`) when the observed block is
 * numerically singular.
 */
[[nodiscard]] ConditionalMoments condition_on_observed(const PartialArray& obs, const ArrayNormalModel& model,
                                                       bool with_covariance,
                                                       ConditioningRoute route = ConditioningRoute::Automatic,
                                                       Index observation = 0);

/**
 * Mode-k scatter sum_l E[ Z_l(k) Z_l(k)^T | x_r ] where Z_l is the residual Y_l whitened
 * on every mode j != k by the roots of `factors[j]` (factors[k] is ignored).
 *
 * `residuals[l]` is E[X_l | x_r] minus the current mean. When `moments` carry conditional
 * covariances, their contribution is added; otherwise only the plug-in term is used.
 */
[[nodiscard]] Eigen::MatrixXd expected_mode_scatter(std::span<const MultiwayArray> residuals,
                                                    std::span<const ConditionalMoments> moments,
                                                    std::span<const CovarianceFactor> factors, Index k);

}  // namespace arrayem
