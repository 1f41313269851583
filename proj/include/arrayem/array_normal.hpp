#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "arrayem/tensor.hpp"

namespace arrayem {

/// Default cap on prod_k m_k for operations that materialize the full covariance.
inline constexpr Index kDefaultMaterializeCap = 4096;

/**
 * Lower-triangular Cholesky root A of an SPD matrix, A A^T = sigma.
 *
 * Throws NotPositiveDefinite (tagged with `dimension`) when a pivot falls at or below
 * a relative jitter threshold. Inputs are never repaired here.
 */
[[nodiscard]] Eigen::MatrixXd factor_root(const Eigen::MatrixXd& sigma, Index dimension = 0);

/// One dimension's covariance Sigma_k together with its root A_k.
class CovarianceFactor {
public:
    CovarianceFactor() = default;
    explicit CovarianceFactor(Eigen::MatrixXd sigma, Index dimension = 0);

    static CovarianceFactor identity(Index m) { return CovarianceFactor(Eigen::MatrixXd::Identity(m, m)); }

    [[nodiscard]] Index order() const noexcept { return sigma_.rows(); }
    [[nodiscard]] const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
    [[nodiscard]] const Eigen::MatrixXd& root() const noexcept { return root_; }
    /// log|A_k| from the root's diagonal.
    [[nodiscard]] double log_det_root() const noexcept { return log_det_root_; }
    /// Sigma_k^{-1} formed from the root.
    [[nodiscard]] Eigen::MatrixXd precision() const;

    /// The same factor multiplied by c > 0 (root scaled by sqrt(c)).
    [[nodiscard]] CovarianceFactor scaled(double c) const;

private:
    Eigen::MatrixXd sigma_;
    Eigen::MatrixXd root_;
    double log_det_root_ = 0.0;
};

/// Lambda = Sigma_i ⊗ ... ⊗ Sigma_1, held factor-wise.
class KroneckerCovariance {
public:
    KroneckerCovariance() = default;
    explicit KroneckerCovariance(std::vector<CovarianceFactor> factors);

    static KroneckerCovariance identity(const Shape& shape);

    [[nodiscard]] Index order() const noexcept { return static_cast<Index>(factors_.size()); }
    [[nodiscard]] const CovarianceFactor& factor(Index k) const { return factors_.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] const std::vector<CovarianceFactor>& factors() const noexcept { return factors_; }
    void set_factor(Index k, CovarianceFactor f);
    [[nodiscard]] Shape shape() const;

    /// log|Lambda| = 2 sum_k (n / m_k) log|A_k|.
    [[nodiscard]] double log_det() const;
    /// The dense Lambda; throws SizeLimitExceeded beyond `cap` cells.
    [[nodiscard]] Eigen::MatrixXd dense(Index cap = kDefaultMaterializeCap) const;

private:
    std::vector<CovarianceFactor> factors_;
};

struct ArrayNormalModel {
    MultiwayArray mean;
    KroneckerCovariance covariance;

    /// Throws InvalidArgument when mean and covariance shapes disagree.
    void validate() const;
    [[nodiscard]] const Shape& shape() const noexcept { return mean.shape(); }
};

[[nodiscard]] double log_density(const MultiwayArray& x, const ArrayNormalModel& model);

struct VecParameters {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// rvec(M) and the materialized Lambda.
[[nodiscard]] VecParameters vec_parameters(const ArrayNormalModel& model, Index cap = kDefaultMaterializeCap);

/// n draws of M + (A_1)^1 ... (A_i)^i Z with Z i.i.d. standard normal.
[[nodiscard]] std::vector<MultiwayArray> sample(const ArrayNormalModel& model, std::mt19937_64& rng, Index n);

/// Mean squared entrywise difference between two Kronecker covariances, without materializing either.
[[nodiscard]] double kronecker_mse(const KroneckerCovariance& a, const KroneckerCovariance& b);

}  // namespace arrayem
