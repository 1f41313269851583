#include "arrayem/profile.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace arrayem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kClamp = 1e-10;

// Symmetric eigenvalues with tiny negatives clamped to zero; larger negatives are rejected.
void clamp_eigenvalues(Eigen::VectorXd& ev, const char* what) {
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < 0.0) {
            if (ev[i] < -kClamp * scale) {
                throw InvalidArgument(std::string(what) + " is not positive semi-definite (eigenvalue " +
                                      std::to_string(ev[i]) + ")");
            }
            ev[i] = 0.0;
        }
    }
}

void check_positive_shift(const Eigen::VectorXd& ev, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("lambda must be non-negative");
    if ((ev.array() + lambda).minCoeff() <= 0.0) {
        throw DomainError("H is singular: eigenvalue + lambda <= 0 at lambda = " + std::to_string(lambda));
    }
}

// 0.5 [ n log(n / 2 pi) - n - n log(sum_sq) - sum_log ]
double profile_formula(double n, double sum_sq, double sum_log) {
    return 0.5 * (n * (std::log(n) - kLog2Pi) - n - n * std::log(sum_sq) - sum_log);
}

}  // namespace

void SpmmProblem::validate() const {
    const Index n = y.size();
    if (n < 2) throw InvalidArgument("SPMM needs at least two responses");
    if (x.rows() != n || z.rows() != n) throw InvalidArgument("design rows do not match the response length");
    if (kernel.rows() != kernel.cols() || kernel.rows() != z.cols()) {
        throw InvalidArgument("kernel does not match the random-effect design");
    }
    if (x.cols() < 1 || x.cols() >= n) throw InvalidArgument("fixed-effect design needs 1 <= q < n columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() != x.cols()) throw InvalidArgument("fixed-effect design is not of full column rank");
}

SpmmProfile::SpmmProfile(const SpmmProblem& problem) : n_(problem.y.size()) {
    problem.validate();
    const Eigen::MatrixXd h0 = problem.z * problem.kernel * problem.z.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h0);
    eps_ = eig.eigenvalues();
    clamp_eigenvalues(eps_, "Z K Z^T");
    ut_x_ = eig.eigenvectors().transpose() * problem.x;
    ut_y_ = eig.eigenvectors().transpose() * problem.y;

    // Orthonormal basis of the complement of span(X); S H S acts there with eigenvalues tau + lambda.
    const Index q = problem.x.cols();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(problem.x);
    const Eigen::MatrixXd q_full = qr.householderQ() * Eigen::MatrixXd::Identity(n_, n_);
    const Eigen::MatrixXd q2 = q_full.rightCols(n_ - q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(q2.transpose() * h0 * q2);
    tau_ = eig2.eigenvalues();
    clamp_eigenvalues(tau_, "S Z K Z^T S");
    eta_ = eig2.eigenvectors().transpose() * (q2.transpose() * problem.y);
}

SpmmEstimate SpmmProfile::evaluate(double lambda) const {
    check_positive_shift(eps_, lambda);
    check_positive_shift(tau_, lambda);
    const Eigen::ArrayXd w = (eps_.array() + lambda).inverse();
    const Eigen::MatrixXd xtx = ut_x_.transpose() * w.matrix().asDiagonal() * ut_x_;
    const Eigen::VectorXd xty = ut_x_.transpose() * (w * ut_y_.array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) throw DomainError("X^T H^{-1} X is singular");

    SpmmEstimate out;
    out.beta = ldlt.solve(xty);
    const double n = static_cast<double>(n_);
    const double sum_sq = (eta_.array().square() / (tau_.array() + lambda)).sum();
    if (!(sum_sq > 0.0)) throw DomainError("residual quadratic form is zero");
    out.sigma_g2 = sum_sq / n;
    out.loglik = profile_formula(n, sum_sq, (eps_.array() + lambda).log().sum());
    return out;
}

SpmmEstimate spmm_profile_loglik(double lambda, const SpmmProblem& problem) {
    return SpmmProfile(problem).evaluate(lambda);
}

KronEigenWorkspace::KronEigenWorkspace(const Eigen::MatrixXd& kernel, Index replication) : replication_(replication) {
    if (kernel.rows() != kernel.cols() || kernel.rows() == 0) throw InvalidArgument("kernel must be square");
    if (replication < 1) throw InvalidArgument("replication must be at least 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (kernel + kernel.transpose()));
    if (eig.info() != Eigen::Success) throw InvalidArgument("kernel eigendecomposition failed");
    evals_ = eig.eigenvalues();
    clamp_eigenvalues(evals_, "kernel");
    evecs_ = eig.eigenvectors();
}

Eigen::VectorXd KronEigenWorkspace::eigenvalues(double lambda) const {
    return (evals_.array() + lambda).matrix().replicate(replication_, 1);
}

Eigen::VectorXd KronEigenWorkspace::rotate(const Eigen::VectorXd& z) const {
    if (z.size() != effective_size()) throw InvalidArgument("data length does not match n*");
    const Index m = evals_.size();
    Eigen::Map<const Eigen::MatrixXd> blocks(z.data(), m, replication_);
    Eigen::VectorXd out(z.size());
    Eigen::Map<Eigen::MatrixXd>(out.data(), m, replication_).noalias() = evecs_.transpose() * blocks;
    return out;
}

Eigen::VectorXd KronEigenWorkspace::rotated_square_sums(const Eigen::MatrixXd& scatter) const {
    if (scatter.rows() != evals_.size() || scatter.cols() != evals_.size()) {
        throw InvalidArgument("scatter does not match the kernel order");
    }
    return (evecs_.transpose() * scatter * evecs_).diagonal();
}

Eigen::VectorXd KronEigenWorkspace::rotated_square_sums(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd eta = rotate(z);
    Eigen::Map<const Eigen::MatrixXd> blocks(eta.data(), evals_.size(), replication_);
    return blocks.array().square().rowwise().sum();
}

KronEigenWorkspace kron_eigen_H(const Eigen::MatrixXd& kernel, Index replication) {
    return KronEigenWorkspace(kernel, replication);
}

ProfileValue array_profile_loglik_from_sums(double lambda, const Eigen::VectorXd& square_sums,
                                            const KronEigenWorkspace& ws) {
    if (square_sums.size() != ws.kernel_order()) throw InvalidArgument("square sums do not match the kernel order");
    check_positive_shift(ws.kernel_eigenvalues(), lambda);
    const Eigen::ArrayXd shifted = ws.kernel_eigenvalues().array() + lambda;
    const double n = static_cast<double>(ws.effective_size());
    const double sum_sq = (square_sums.array() / shifted).sum();
    if (!(sum_sq > 0.0)) throw DomainError("data vector is zero");
    const double sum_log = static_cast<double>(ws.replication()) * shifted.log().sum();
    return {profile_formula(n, sum_sq, sum_log), sum_sq / n};
}

ProfileValue array_profile_loglik(double lambda, const Eigen::VectorXd& z, const KronEigenWorkspace& ws) {
    check_positive_shift(ws.kernel_eigenvalues(), lambda);
    const Eigen::VectorXd eta = ws.rotate(z);
    const Eigen::ArrayXd shifted = ws.eigenvalues(lambda).array();
    const double n = static_cast<double>(eta.size());
    const double sum_sq = (eta.array().square() / shifted).sum();
    if (!(sum_sq > 0.0)) throw DomainError("data vector is zero");
    return {profile_formula(n, sum_sq, shifted.log().sum()), sum_sq / n};
}

LambdaOptimum maximize_on_log_grid(const std::function<ProfileValue(double)>& profile, const LambdaSearch& search) {
    if (!(search.lower > 0.0) || !(search.upper > search.lower) || search.grid_points < 3) {
        throw InvalidArgument("invalid lambda search interval");
    }
    const double lo = std::log(search.lower);
    const double hi = std::log(search.upper);
    const int g = search.grid_points;
    const double step = (hi - lo) / (g - 1);
    std::vector<double> ll(static_cast<std::size_t>(g));
    int best = 0;
    for (int i = 0; i < g; ++i) {
        ll[static_cast<std::size_t>(i)] = profile(std::exp(lo + step * i)).loglik;
        if (ll[static_cast<std::size_t>(i)] > ll[static_cast<std::size_t>(best)]) best = i;
    }

    LambdaOptimum out;
    out.at_boundary = best == 0 || best == g - 1;
    double best_t = lo + step * best;
    double best_ll = ll[static_cast<std::size_t>(best)];

    // Golden section on [t_{best-1}, t_{best+1}] in log lambda.
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo + step * std::max(0, best - 1);
    double b = lo + step * std::min(g - 1, best + 1);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = profile(std::exp(c)).loglik;
    double fd = profile(std::exp(d)).loglik;
    for (int it = 0; it < 200 && (b - a) > 1e-10; ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(std::exp(c)).loglik;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(std::exp(d)).loglik;
        }
    }
    const double t = fc > fd ? c : d;
    const double ft = std::max(fc, fd);
    if (ft > best_ll) {
        best_t = t;
        best_ll = ft;
    }
    out.lambda = std::exp(best_t);
    const ProfileValue final_value = profile(out.lambda);
    out.loglik = final_value.loglik;
    out.sigma2 = final_value.sigma2;
    return out;
}

LambdaOptimum optimize_lambda_k(const Eigen::VectorXd& z, const KronEigenWorkspace& ws, const LambdaSearch& search) {
    return optimize_lambda_k_from_sums(ws.rotated_square_sums(z), ws, search);
}

LambdaOptimum optimize_lambda_k_from_sums(const Eigen::VectorXd& square_sums, const KronEigenWorkspace& ws,
                                          const LambdaSearch& search) {
    return maximize_on_log_grid([&](double lambda) { return array_profile_loglik_from_sums(lambda, square_sums, ws); },
                                search);
}

}  // namespace arrayem
