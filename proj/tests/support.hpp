#pragma once

// Independent dense oracles and random instance builders shared by unit and acceptance tests.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "arrayem/array_normal.hpp"
#include "arrayem/profile.hpp"
#include "arrayem/tensor.hpp"

namespace oracle {

using arrayem::Index;

inline Eigen::MatrixXd random_matrix(Index r, Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

inline Eigen::VectorXd random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng); }

/// B B^T / m + 0.3 I, well conditioned.
inline Eigen::MatrixXd random_spd(Index m, std::mt19937_64& rng) {
    const Eigen::MatrixXd b = random_matrix(m, m, rng);
    Eigen::MatrixXd s = b * b.transpose() / static_cast<double>(m);
    s.diagonal().array() += 0.3;
    return s;
}

inline arrayem::MultiwayArray random_array(const arrayem::Shape& shape, std::mt19937_64& rng) {
    return arrayem::MultiwayArray(shape, random_vector(shape.size(), rng));
}

inline arrayem::ArrayNormalModel random_model(const arrayem::Shape& shape, std::mt19937_64& rng) {
    std::vector<arrayem::CovarianceFactor> f;
    for (Index k = 0; k < shape.order(); ++k) f.emplace_back(random_spd(shape.dim(k), rng), k);
    return {random_array(shape, rng), arrayem::KroneckerCovariance(std::move(f))};
}

/// Dense Kronecker product from the block definition.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index u = 0; u < a.rows(); ++u)
        for (Index v = 0; v < a.cols(); ++v)
            for (Index i = 0; i < b.rows(); ++i)
                for (Index j = 0; j < b.cols(); ++j) out(u * b.rows() + i, v * b.cols() + j) = a(u, v) * b(i, j);
    return out;
}

/// Sigma_{i-1} ⊗ ... ⊗ Sigma_0.
inline Eigen::MatrixXd dense_lambda(const std::vector<Eigen::MatrixXd>& factors) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(1, 1);
    for (const auto& f : factors) out = kron(f, out);
    return out;
}

inline Eigen::MatrixXd dense_lambda(const arrayem::KroneckerCovariance& cov) {
    std::vector<Eigen::MatrixXd> f;
    for (const auto& c : cov.factors()) f.push_back(c.sigma());
    return dense_lambda(f);
}

/// Multivariate normal log density through a full Cholesky of the covariance.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const Eigen::VectorXd z = llt.matrixL().solve(x - mu);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double n = static_cast<double>(x.size());
    return -0.5 * (z.squaredNorm() + log_det + n * std::log(2.0 * std::numbers::pi));
}

/// Rows/columns of `m` at `idx`.
inline Eigen::MatrixXd select(const Eigen::MatrixXd& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

inline Eigen::VectorXd select(const Eigen::VectorXd& v, const std::vector<Index>& idx) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

/// Normalizes factors 1.. to a unit (0,0) entry, pushing the scale into factor 0.
inline std::vector<Eigen::MatrixXd> normalized(std::vector<Eigen::MatrixXd> f) {
    for (std::size_t k = 1; k < f.size(); ++k) {
        const double c = f[k](0, 0);
        f[k] /= c;
        f[0] *= c;
    }
    return f;
}

/// Classical matrix Flip-Flop with explicit inverses; second factor normalized to a unit (0,0) entry.
inline std::vector<Eigen::MatrixXd> reference_flip_flop(const std::vector<Eigen::MatrixXd>& xs) {
    const Index p = xs.front().rows();
    const Index q = xs.front().cols();
    const double n = static_cast<double>(xs.size());
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p, q);
    for (const auto& x : xs) mean += x / n;
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Identity(q, q);
    for (int it = 0; it < 5000; ++it) {
        const Eigen::MatrixXd old1 = s1;
        const Eigen::MatrixXd s2inv = s2.inverse();
        s1.setZero();
        for (const auto& x : xs) s1 += (x - mean) * s2inv * (x - mean).transpose();
        s1 /= n * static_cast<double>(q);
        const Eigen::MatrixXd s1inv = s1.inverse();
        s2.setZero();
        for (const auto& x : xs) s2 += (x - mean).transpose() * s1inv * (x - mean);
        s2 /= n * static_cast<double>(p);
        const double c = s2(0, 0);
        s2 /= c;
        s1 *= c;
        if ((s1 - old1).norm() < 1e-14 * s1.norm()) break;
    }
    return {s1, s2};
}

/// SPMM likelihood at the GLS beta and ML sigma^2, through a dense Cholesky.
struct DenseSpmm {
    double loglik;
    Eigen::VectorXd beta;
    double sigma_g2;
};

inline DenseSpmm dense_spmm(double lambda, const arrayem::SpmmProblem& p) {
    const Index n = p.y.size();
    const Eigen::MatrixXd h = p.z * p.kernel * p.z.transpose() + lambda * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LLT<Eigen::MatrixXd> llt(h);
    const Eigen::MatrixXd hx = llt.solve(p.x);
    const Eigen::VectorXd beta = (p.x.transpose() * hx).ldlt().solve(hx.transpose() * p.y);
    const Eigen::VectorXd r = p.y - p.x * beta;
    const double s2 = r.dot(llt.solve(r)) / static_cast<double>(n);
    const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const double nn = static_cast<double>(n);
    return {-0.5 * (nn * (std::log(2.0 * std::numbers::pi) + std::log(s2)) + log_det + nn), beta, s2};
}

// Dense normal log-likelihood of z ~ N(0, s2 H) with H = I_r ⊗ K + lambda I.
inline double dense_array_loglik(double lambda, double s2, const Eigen::VectorXd& z, const Eigen::MatrixXd& k, Index r) {
    const Index n = z.size();
    const Eigen::MatrixXd h =
        kron(Eigen::MatrixXd::Identity(r, r), k) + lambda * Eigen::MatrixXd::Identity(n, n);
    return mvn_logpdf(z, Eigen::VectorXd::Zero(n), s2 * h);
}

}  // namespace oracle
