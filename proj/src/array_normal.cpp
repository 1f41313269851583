#include "arrayem/array_normal.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace arrayem {

namespace {

// Relative pivot floor: a pivot at or below kJitter * max|diag| counts as a failure.
constexpr double kJitter = 1e-13;
// Relative asymmetry accepted on construction; the stored matrix is symmetrized.
constexpr double kSymmetryTol = 1e-12;

}  // namespace

Eigen::MatrixXd factor_root(const Eigen::MatrixXd& sigma, Index dimension) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
        throw InvalidArgument("covariance factor for dimension " + std::to_string(dimension + 1) + " is not square");
    }
    if (!sigma.allFinite()) throw NotPositiveDefinite(dimension, "covariance factor has non-finite entries");
    const double scale = sigma.diagonal().cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) throw NotPositiveDefinite(dimension, "covariance factor is zero");

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(dimension, "Cholesky factorization failed");
    Eigen::MatrixXd root = llt.matrixL();
    const double min_pivot = root.diagonal().array().square().minCoeff();
    if (!(min_pivot > kJitter * scale)) {
        throw NotPositiveDefinite(dimension, "pivot " + std::to_string(min_pivot) + " below jitter threshold");
    }
    return root;
}

CovarianceFactor::CovarianceFactor(Eigen::MatrixXd sigma, Index dimension) : sigma_(std::move(sigma)) {
    if (sigma_.rows() != sigma_.cols()) throw InvalidArgument("covariance factor is not square");
    const double scale = sigma_.cwiseAbs().maxCoeff();
    if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
        throw NotPositiveDefinite(dimension, "covariance factor is not symmetric");
    }
    sigma_ = 0.5 * (sigma_ + sigma_.transpose()).eval();
    root_ = factor_root(sigma_, dimension);
    log_det_root_ = root_.diagonal().array().log().sum();
}

Eigen::MatrixXd CovarianceFactor::precision() const {
    const Index m = order();
    Eigen::MatrixXd inv_root = root_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
    return inv_root.transpose() * inv_root;
}

CovarianceFactor CovarianceFactor::scaled(double c) const {
    CovarianceFactor out;
    out.sigma_ = c * sigma_;
    out.root_ = std::sqrt(c) * root_;
    out.log_det_root_ = log_det_root_ + 0.5 * std::log(c) * static_cast<double>(order());
    return out;
}

KroneckerCovariance::KroneckerCovariance(std::vector<CovarianceFactor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw InvalidArgument("Kronecker covariance needs at least one factor");
}

KroneckerCovariance KroneckerCovariance::identity(const Shape& shape) {
    std::vector<CovarianceFactor> f;
    for (Index m : shape.dims()) f.push_back(CovarianceFactor::identity(m));
    return KroneckerCovariance(std::move(f));
}

void KroneckerCovariance::set_factor(Index k, CovarianceFactor f) {
    auto& slot = factors_.at(static_cast<std::size_t>(k));
    if (slot.order() != f.order()) throw InvalidArgument("replacement factor has the wrong order");
    slot = std::move(f);
}

Shape KroneckerCovariance::shape() const {
    std::vector<Index> dims;
    for (const auto& f : factors_) dims.push_back(f.order());
    return Shape(std::move(dims));
}

double KroneckerCovariance::log_det() const {
    const double n = static_cast<double>(shape().size());
    double ld = 0.0;
    for (const auto& f : factors_) ld += 2.0 * (n / static_cast<double>(f.order())) * f.log_det_root();
    return ld;
}

Eigen::MatrixXd KroneckerCovariance::dense(Index cap) const {
    const Index n = shape().size();
    if (n > cap) {
        throw SizeLimitExceeded("covariance of " + std::to_string(n) + " cells exceeds the materialization cap " +
                                std::to_string(cap));
    }
    std::vector<Eigen::MatrixXd> sig;
    for (const auto& f : factors_) sig.push_back(f.sigma());
    return kronecker_chain(sig);
}

void ArrayNormalModel::validate() const {
    if (!(mean.shape() == covariance.shape())) throw InvalidArgument("mean and covariance shapes differ");
}

double log_density(const MultiwayArray& x, const ArrayNormalModel& model) {
    model.validate();
    if (!(x.shape() == model.shape())) throw InvalidArgument("observation shape does not match the model");
    MultiwayArray z = x - model.mean;
    for (Index k = 0; k < model.covariance.order(); ++k) {
        z = mode_solve_lower(z, model.covariance.factor(k).root(), k);
    }
    const double n = static_cast<double>(x.size());
    double log_norm = 0.5 * n * std::log(2.0 * std::numbers::pi);
    for (const auto& f : model.covariance.factors()) {
        log_norm += (n / static_cast<double>(f.order())) * f.log_det_root();
    }
    return -0.5 * square_norm(z) - log_norm;
}

VecParameters vec_parameters(const ArrayNormalModel& model, Index cap) {
    model.validate();
    return {model.mean.values(), model.covariance.dense(cap)};
}

std::vector<MultiwayArray> sample(const ArrayNormalModel& model, std::mt19937_64& rng, Index n) {
    model.validate();
    if (n < 1) throw InvalidArgument("sample size must be at least 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<MultiwayArray> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index s = 0; s < n; ++s) {
        MultiwayArray z(model.shape());
        for (Index c = 0; c < z.size(); ++c) z[c] = normal(rng);
        for (Index k = 0; k < model.covariance.order(); ++k) z = mode_multiply(z, model.covariance.factor(k).root(), k);
        z += model.mean;
        out.push_back(std::move(z));
    }
    return out;
}

double kronecker_mse(const KroneckerCovariance& a, const KroneckerCovariance& b) {
    if (!(a.shape() == b.shape())) throw InvalidArgument("covariance shapes differ");
    // ||A - B||^2 = ||A||^2 + ||B||^2 - 2<A,B>, each term a product over factors.
    double aa = 1.0, bb = 1.0, ab = 1.0;
    for (Index k = 0; k < a.order(); ++k) {
        const auto& fa = a.factor(k).sigma();
        const auto& fb = b.factor(k).sigma();
        aa *= fa.squaredNorm();
        bb *= fb.squaredNorm();
        ab *= fa.cwiseProduct(fb).sum();
    }
    const double n = static_cast<double>(a.shape().size());
    return std::max(0.0, aa + bb - 2.0 * ab) / (n * n);
}

}  // namespace arrayem
