#pragma once

#include <functional>

#include <Eigen/Dense>

#include "arrayem/errors.hpp"

namespace arrayem {

// ---------------------------------------------------------------------------
// Vector SPMM: y = X b + Z g + e, cov(y) = sigma_g^2 (Z K Z^T + lambda I).
// ---------------------------------------------------------------------------

struct SpmmProblem {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;       ///< n x q fixed-effect design, full column rank
    Eigen::MatrixXd z;       ///< n x k random-effect design
    Eigen::MatrixXd kernel;  ///< k x k PSD

    void validate() const;
};

struct SpmmEstimate {
    double loglik = 0.0;
    Eigen::VectorXd beta;
    double sigma_g2 = 0.0;
};

/**
 * Spectral form of the SPMM profile likelihood. The two eigendecompositions
 * (of Z K Z^T and of S Z K Z^T S restricted to the complement of X) are done once;
 * each evaluation is then O(n) plus the q x q solve for beta.
 */
class SpmmProfile {
public:
    explicit SpmmProfile(const SpmmProblem& problem);

    [[nodiscard]] SpmmEstimate evaluate(double lambda) const;

    [[nodiscard]] const Eigen::VectorXd& eigenvalues() const noexcept { return eps_; }
    [[nodiscard]] const Eigen::VectorXd& projected_eigenvalues() const noexcept { return tau_; }

private:
    Index n_ = 0;
    Eigen::VectorXd eps_;
    Eigen::VectorXd tau_;
    Eigen::VectorXd eta_;     // V^T y
    Eigen::MatrixXd ut_x_;    // U^T X
    Eigen::VectorXd ut_y_;    // U^T y
};

[[nodiscard]] SpmmEstimate spmm_profile_loglik(double lambda, const SpmmProblem& problem);

// ---------------------------------------------------------------------------
// Array profile likelihood along one dimension with a known kernel.
// ---------------------------------------------------------------------------

/**
 * Eigenstructure of H_k = I_r ⊗ K_k + lambda I without forming H_k: the eigenvalues are
 * those of K_k (each repeated r = replication times) plus lambda, and the eigenvectors
 * are I_r ⊗ U_k, applied blockwise.
 */
class KronEigenWorkspace {
public:
    KronEigenWorkspace() = default;
    KronEigenWorkspace(const Eigen::MatrixXd& kernel, Index replication);

    [[nodiscard]] Index kernel_order() const noexcept { return evals_.size(); }
    [[nodiscard]] Index replication() const noexcept { return replication_; }
    /// n* = m_k * replication.
    [[nodiscard]] Index effective_size() const noexcept { return evals_.size() * replication_; }
    /// Eigenvalues of K_k (ascending, tiny negatives clamped to 0).
    [[nodiscard]] const Eigen::VectorXd& kernel_eigenvalues() const noexcept { return evals_; }
    [[nodiscard]] const Eigen::MatrixXd& kernel_eigenvectors() const noexcept { return evecs_; }

    /// All n* eigenvalues of H_k in block order.
    [[nodiscard]] Eigen::VectorXd eigenvalues(double lambda) const;
    /// (I ⊗ U_k)^T z.
    [[nodiscard]] Eigen::VectorXd rotate(const Eigen::VectorXd& z) const;
    /// Per-eigenvalue sums of eta^2 over the replicated blocks, i.e. diag(U_k^T S U_k) for a scatter S.
    [[nodiscard]] Eigen::VectorXd rotated_square_sums(const Eigen::MatrixXd& scatter) const;
    [[nodiscard]] Eigen::VectorXd rotated_square_sums(const Eigen::VectorXd& z) const;

private:
    Eigen::VectorXd evals_;
    Eigen::MatrixXd evecs_;
    Index replication_ = 0;
};

[[nodiscard]] KronEigenWorkspace kron_eigen_H(const Eigen::MatrixXd& kernel, Index replication);

struct ProfileValue {
    double loglik = 0.0;
    double sigma2 = 0.0;
};

/// Profile log-likelihood in lambda with sigma^2 maximized out, for z of length n*.
[[nodiscard]] ProfileValue array_profile_loglik(double lambda, const Eigen::VectorXd& z, const KronEigenWorkspace& ws);

/// Same value from per-eigenvalue sums of squared rotated data (see rotated_square_sums).
[[nodiscard]] ProfileValue array_profile_loglik_from_sums(double lambda, const Eigen::VectorXd& square_sums,
                                                          const KronEigenWorkspace& ws);

struct LambdaSearch {
    double lower = 1e-9;
    double upper = 1e9;
    int grid_points = 100;
};

struct LambdaOptimum {
    double lambda = 0.0;
    double loglik = 0.0;
    double sigma2 = 0.0;
    /// The best grid point was an endpoint of the search interval.
    bool at_boundary = false;
};

/// Log-spaced grid followed by golden-section refinement (in log lambda) around the best grid point.
[[nodiscard]] LambdaOptimum maximize_on_log_grid(const std::function<ProfileValue(double)>& profile,
                                                 const LambdaSearch& search = {});

[[nodiscard]] LambdaOptimum optimize_lambda_k(const Eigen::VectorXd& z, const KronEigenWorkspace& ws,
                                              const LambdaSearch& search = {});

[[nodiscard]] LambdaOptimum optimize_lambda_k_from_sums(const Eigen::VectorXd& square_sums,
                                                        const KronEigenWorkspace& ws, const LambdaSearch& search = {});

}  // namespace arrayem
