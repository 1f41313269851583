#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "arrayem/array_normal.hpp"
#include "arrayem/conditional.hpp"
#include "arrayem/missing_em.hpp"
#include "arrayem/partial.hpp"
#include "arrayem/profile.hpp"

namespace arrayem {

/// Covariance along one dimension is K + lambda I (times sigma^2 on the first Known dimension).
struct KnownKernel {
    Eigen::MatrixXd kernel;
    double lambda = 1.0;
};

/// Covariance along one dimension is a free SPD matrix with unit (0,0) entry.
struct Unstructured {
    Eigen::MatrixXd sigma;
};

using DimensionSpec = std::variant<KnownKernel, Unstructured>;

[[nodiscard]] inline bool is_known(const DimensionSpec& s) { return std::holds_alternative<KnownKernel>(s); }
[[nodiscard]] Index spec_order(const DimensionSpec& s);

/**
 * Additive mean M[q_0,...,q_{i-1}] = sum_k beta_k[q_k]. Excluded dimensions keep beta_k = 0.
 * Every included beta_k other than the reference (the first included dimension) sums to zero.
 */
struct AdditiveMean {
    std::vector<Eigen::VectorXd> betas;
    std::vector<bool> included;

    static AdditiveMean zero(const Shape& shape, std::vector<bool> included = {});
    /// First included dimension, or -1 when none is.
    [[nodiscard]] Index reference() const;
    void validate(const Shape& shape) const;
};

[[nodiscard]] MultiwayArray additive_mean_array(const AdditiveMean& mean, const Shape& shape);

struct AvspmmModel {
    AdditiveMean mean;
    /// Replaces the additive mean when set.
    std::optional<MultiwayArray> cellwise_mean;
    /// Multiplies the first Known dimension; fixed at 1 when no dimension is Known.
    double sigma2 = 1.0;
    std::vector<DimensionSpec> specs;

    [[nodiscard]] Shape shape() const;
    [[nodiscard]] Index first_known() const;
    [[nodiscard]] MultiwayArray mean_array() const;
    [[nodiscard]] Eigen::MatrixXd factor_sigma(Index k) const;
    [[nodiscard]] KroneckerCovariance covariance() const;
    /// The array-normal model with the mean and Kronecker covariance implied by the parameters.
    [[nodiscard]] ArrayNormalModel implied() const;
    void validate() const;
};

/**
 * GLS estimate of beta_k with every other parameter held fixed:
 * (1/N) sum_l r_l x_{j != k} w_j^T / prod_{j != k} 1^T w_j, with r_l = x_l - M(beta_k = 0)
 * and w_j = Sigma_j^{-1} 1. With identity factors this is the average of the mode-k columns.
 */
[[nodiscard]] Eigen::VectorXd estimate_beta_k(std::span<const MultiwayArray> arrays, const AvspmmModel& model,
                                              Index k);

enum class MeanModel { Additive, Cellwise };

struct AvspmmConfig {
    int max_iterations = 200;
    double rel_tol = 1e-6;
    MeanModel mean_model = MeanModel::Additive;
    /// Per-dimension inclusion in the additive mean; empty means all included.
    std::vector<bool> mean_dimensions;
    EStep estep = EStep::ConditionalMoments;
    ConditioningRoute route = ConditioningRoute::Automatic;
    LambdaSearch search;
    /// Starting parameters; its specs replace the ones passed to fit_avspmm.
    std::optional<AvspmmModel> warm_start;

    void validate() const;
};

struct AvspmmReport {
    AvspmmModel model;
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    std::vector<MultiwayArray> imputed;
    /// Per dimension: the last lambda update landed on a search bound (false for Unstructured).
    std::vector<bool> lambda_at_boundary;
    std::vector<std::string> warnings;
};

/**
 * Alternates conditional imputation, additive-mean updates and per-dimension covariance
 * updates (profile likelihood in lambda for Known dimensions, scatter update otherwise)
 * until the observed-data log-likelihood settles. Initial lambda and Sigma come from `specs`.
 */
[[nodiscard]] AvspmmReport fit_avspmm(const PartialSample& sample, const std::vector<DimensionSpec>& specs,
                                      const AvspmmConfig& config = {});

}  // namespace arrayem
