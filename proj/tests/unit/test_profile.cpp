#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "arrayem/profile.hpp"
#include "support.hpp"

using namespace arrayem;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SpmmProblem random_problem(Index n, Index q, Index k, std::mt19937_64& rng) {
    SpmmProblem p;
    p.x = oracle::random_matrix(n, q, rng);
    p.x.col(0).setOnes();
    p.z = oracle::random_matrix(n, k, rng);
    const Eigen::MatrixXd w = oracle::random_matrix(k, 2 * k, rng);
    p.kernel = w * w.transpose() / static_cast<double>(2 * k);
    p.y = oracle::random_vector(n, rng) + p.x * oracle::random_vector(q, rng);
    return p;
}

Eigen::MatrixXd random_kernel(Index m, Index markers, std::mt19937_64& rng) {
    const Eigen::MatrixXd w = oracle::random_matrix(m, markers, rng);
    return w * w.transpose() / static_cast<double>(markers);
}

Eigen::VectorXd simulate_z(const Eigen::MatrixXd& k, Index r, double lambda, double s2, std::mt19937_64& rng) {
    const Index m = k.rows();
    const Eigen::MatrixXd root = (k + lambda * Eigen::MatrixXd::Identity(m, m)).llt().matrixL();
    Eigen::VectorXd z(m * r);
    for (Index b = 0; b < r; ++b) z.segment(b * m, m) = std::sqrt(s2) * root * oracle::random_vector(m, rng);
    return z;
}

}  // namespace

TEST_SUITE("profile") {

TEST_CASE("spmm with identity kernel reduces to the iid profile") {
    std::mt19937_64 rng(201);
    const Index n = 30;
    SpmmProblem p;
    p.y = oracle::random_vector(n, rng);
    p.x = Eigen::MatrixXd::Ones(n, 1);
    p.z = Eigen::MatrixXd::Identity(n, n);
    p.kernel = Eigen::MatrixXd::Identity(n, n);
    const double mean = p.y.mean();
    const double rss = (p.y.array() - mean).square().sum();
    const double nn = static_cast<double>(n);
    for (double lambda : {0.01, 0.5, 3.0, 100.0}) {
        const SpmmEstimate e = spmm_profile_loglik(lambda, p);
        CHECK(e.beta[0] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(e.sigma_g2 * (1.0 + lambda) == doctest::Approx(rss / nn).epsilon(1e-12));
        CHECK(e.loglik == doctest::Approx(-0.5 * (nn * std::log(2 * std::numbers::pi * rss / nn) + nn)).epsilon(1e-12));
    }
}

TEST_CASE("spmm spectral form equals the dense likelihood") {
    std::mt19937_64 rng(203);
    std::uniform_real_distribution<double> logl(-4.0, 4.0);
    for (int rep = 0; rep < 5; ++rep) {
        const SpmmProblem p = random_problem(25 + rep, 1 + rep % 3, 8 + rep, rng);
        const SpmmProfile prof(p);
        for (int i = 0; i < 20; ++i) {
            const double lambda = std::exp(logl(rng));
            const SpmmEstimate e = prof.evaluate(lambda);
            const oracle::DenseSpmm d = oracle::dense_spmm(lambda, p);
            CHECK(std::abs(e.loglik - d.loglik) <= 1e-8);
            CHECK((e.beta - d.beta).norm() <= 1e-8 * std::max(1.0, d.beta.norm()));
            CHECK(e.sigma_g2 == doctest::Approx(d.sigma_g2).epsilon(1e-10));
        }
    }
}

TEST_CASE("spmm large-lambda limit is least squares") {
    std::mt19937_64 rng(205);
    const SpmmProblem p = random_problem(40, 2, 10, rng);
    const Eigen::VectorXd ols = p.x.colPivHouseholderQr().solve(p.y);
    const double resid = (p.y - p.x * ols).squaredNorm() / 40.0;
    const double lambda = 1e8;
    const SpmmEstimate e = spmm_profile_loglik(lambda, p);
    CHECK(std::abs(e.sigma_g2 * lambda - resid) <= 0.01 * resid);
    CHECK((e.beta - ols).norm() <= 1e-3 * ols.norm());
}

TEST_CASE("spmm input validation") {
    std::mt19937_64 rng(207);
    SpmmProblem p = random_problem(10, 2, 4, rng);
    SpmmProblem bad = p;
    bad.x = Eigen::MatrixXd::Ones(10, 2);
    CHECK_THROWS_AS((void)SpmmProfile(bad), InvalidArgument);
    bad = p;
    bad.z = Eigen::MatrixXd::Ones(9, 4);
    CHECK_THROWS_AS((void)SpmmProfile(bad), InvalidArgument);
    bad = p;
    bad.kernel = -Eigen::MatrixXd::Identity(4, 4);
    CHECK_THROWS_AS((void)SpmmProfile(bad), InvalidArgument);
    CHECK_THROWS_AS((void)spmm_profile_loglik(-1.0, p), DomainError);
}

TEST_CASE("kronecker eigen shortcut") {
    const KronEigenWorkspace id = kron_eigen_H(Eigen::MatrixXd::Identity(2, 2), 3);
    CHECK(id.eigenvalues(0.5) == Eigen::VectorXd::Constant(6, 1.5));
    CHECK(id.effective_size() == 6);

    std::mt19937_64 rng(209);
    const Eigen::MatrixXd k = random_kernel(3, 5, rng);
    const KronEigenWorkspace ws = kron_eigen_H(k, 2);
    const double lambda = 0.7;
    const Eigen::MatrixXd h = oracle::kron(Eigen::MatrixXd::Identity(2, 2), k) + lambda * Eigen::MatrixXd::Identity(6, 6);
    Eigen::VectorXd dense = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues();
    Eigen::VectorXd implicit = ws.eigenvalues(lambda);
    std::sort(implicit.data(), implicit.data() + implicit.size());
    CHECK((dense - implicit).cwiseAbs().maxCoeff() <= 1e-10);

    const Eigen::VectorXd z = oracle::random_vector(6, rng);
    const Eigen::MatrixXd u = oracle::kron(Eigen::MatrixXd::Identity(2, 2), ws.kernel_eigenvectors());
    CHECK((ws.rotate(z) - u.transpose() * z).cwiseAbs().maxCoeff() <= 1e-12);
    // columns of I ⊗ U are eigenvectors of H with the reported eigenvalues
    CHECK((h * u - u * ws.eigenvalues(lambda).asDiagonal()).cwiseAbs().maxCoeff() <= 1e-10);

    CHECK_THROWS_AS((void)ws.rotate(Eigen::VectorXd::Zero(5)), InvalidArgument);
    CHECK_THROWS_AS((void)kron_eigen_H(Eigen::MatrixXd::Identity(2, 3), 1), InvalidArgument);
}

TEST_CASE("kernel eigenvalues are clamped or rejected") {
    Eigen::MatrixXd k(2, 2);
    k << 1, 1, 1, 1;
    k(1, 1) -= 1e-12;
    const KronEigenWorkspace ws(k, 1);
    CHECK(ws.kernel_eigenvalues().minCoeff() == 0.0);
    k(1, 1) = 0.5;
    CHECK_THROWS_AS((void)KronEigenWorkspace(k, 1), InvalidArgument);
}

TEST_CASE("square sums reproduce the rotated data") {
    std::mt19937_64 rng(211);
    const Eigen::MatrixXd k = random_kernel(4, 6, rng);
    const Index r = 5;
    const KronEigenWorkspace ws(k, r);
    const Eigen::VectorXd z = oracle::random_vector(4 * r, rng);
    const Eigen::Map<const Eigen::MatrixXd> zm(z.data(), 4, r);
    const Eigen::MatrixXd scatter = zm * zm.transpose();
    CHECK((ws.rotated_square_sums(scatter) - ws.rotated_square_sums(z)).norm() <= 1e-12 * scatter.norm());
    for (double lambda : {0.1, 1.0, 10.0}) {
        const ProfileValue a = array_profile_loglik(lambda, z, ws);
        const ProfileValue b = array_profile_loglik_from_sums(lambda, ws.rotated_square_sums(scatter), ws);
        CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-12));
        CHECK(a.sigma2 == doctest::Approx(b.sigma2).epsilon(1e-12));
    }
}

TEST_CASE("array profile equals the dense likelihood at the profiled variance") {
    std::mt19937_64 rng(213);
    std::uniform_real_distribution<double> logl(-5.0, 5.0);
    for (int rep = 0; rep < 5; ++rep) {
        const Index m = 3 + rep;
        const Index r = 4;
        const Eigen::MatrixXd k = random_kernel(m, 2 * m, rng);
        const KronEigenWorkspace ws(k, r);
        const Eigen::VectorXd z = simulate_z(k, r, 1.0, 2.0, rng);
        for (int i = 0; i < 20; ++i) {
            const double lambda = std::exp(logl(rng));
            const ProfileValue v = array_profile_loglik(lambda, z, ws);
            const Index n = m * r;
            const Eigen::MatrixXd h = oracle::kron(Eigen::MatrixXd::Identity(r, r), k) +
                                      lambda * Eigen::MatrixXd::Identity(n, n);
            const double s2 = z.dot(h.llt().solve(z)) / static_cast<double>(n);
            CHECK(v.sigma2 == doctest::Approx(s2).epsilon(1e-10));
            CHECK(std::abs(v.loglik - oracle::dense_array_loglik(lambda, s2, z, k, r)) <= 1e-8);
        }
    }
}

TEST_CASE("identity kernel profile depends on the total variance only") {
    std::mt19937_64 rng(215);
    const Eigen::VectorXd z = oracle::random_vector(60, rng);
    const KronEigenWorkspace ws(Eigen::MatrixXd::Identity(6, 6), 10);
    const double total = z.squaredNorm() / 60.0;
    const double flat = array_profile_loglik(1.0, z, ws).loglik;
    for (double lambda : {1e-3, 0.3, 7.0, 1e3}) {
        const ProfileValue v = array_profile_loglik(lambda, z, ws);
        CHECK(v.sigma2 * (1.0 + lambda) == doctest::Approx(total).epsilon(1e-12));
        CHECK(v.loglik == doctest::Approx(flat).epsilon(1e-12));
    }
}

TEST_CASE("profile domain errors") {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 2);
    k(0, 0) = 1.0;
    const KronEigenWorkspace ws(k, 2);
    CHECK_THROWS_AS((void)array_profile_loglik(0.0, Eigen::VectorXd::Ones(4), ws), DomainError);
    CHECK_THROWS_AS((void)array_profile_loglik(1.0, Eigen::VectorXd::Zero(4), ws), DomainError);
    CHECK_NOTHROW((void)array_profile_loglik(1e-6, Eigen::VectorXd::Ones(4), ws));
}

TEST_CASE("optimizer beats a fine independent grid") {
    std::mt19937_64 rng(217);
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::MatrixXd k = random_kernel(10, 15, rng);
        const KronEigenWorkspace ws(k, 20);
        const Eigen::VectorXd z = simulate_z(k, 20, 0.2 * (rep + 1), 1.5, rng);
        const LambdaOptimum opt = optimize_lambda_k(z, ws);
        double grid_best = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 4000; ++i) {
            const double lambda = std::exp(std::log(1e-9) + i * (std::log(1e9) - std::log(1e-9)) / 4000.0);
            grid_best = std::max(grid_best, array_profile_loglik(lambda, z, ws).loglik);
        }
        CHECK(opt.loglik >= grid_best - 1e-9);
        CHECK(opt.loglik == doctest::Approx(array_profile_loglik(opt.lambda, z, ws).loglik).epsilon(1e-14));
        CHECK_FALSE(opt.at_boundary);
    }
}

TEST_CASE("equal rotated data favour large lambda") {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 2);
    k(1, 1) = 1.0;
    const KronEigenWorkspace ws(k, 10);
    const Eigen::Vector2d sums(10.0, 10.0);
    const LambdaOptimum opt = optimize_lambda_k_from_sums(sums, ws);
    // the profile rises monotonically to a flat tail
    CHECK(opt.lambda > 1e4);
    CHECK(opt.loglik >= array_profile_loglik_from_sums(1e9, sums, ws).loglik - 1e-9);
}

TEST_CASE("noise-free data in a low-rank kernel's range push lambda to the lower bound") {
    std::mt19937_64 rng(219);
    const Eigen::MatrixXd b = oracle::random_matrix(8, 3, rng);
    const Eigen::MatrixXd k = b * b.transpose();
    const Eigen::MatrixXd g = b * oracle::random_matrix(3, 40, rng);
    const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    const LambdaOptimum opt = optimize_lambda_k(z, KronEigenWorkspace(k, 40));
    CHECK(opt.at_boundary);
    CHECK(opt.lambda < 1e-6);
}

TEST_CASE("lambda is recovered from a large simulated sample") {
    std::mt19937_64 rng(221);
    const Eigen::MatrixXd k = random_kernel(50, 100, rng) * 2.0;
    const KronEigenWorkspace ws(k, 40);
    const Eigen::VectorXd z = simulate_z(k, 40, 1.0, 0.8, rng);
    const LambdaOptimum opt = optimize_lambda_k(z, ws);
    CHECK(std::abs(opt.lambda - 1.0) < 0.25);
    CHECK(std::abs(opt.sigma2 - 0.8) < 0.2);
}

TEST_CASE("rescaling the data scales sigma2 and keeps lambda") {
    std::mt19937_64 rng(223);
    const Eigen::MatrixXd k = random_kernel(12, 20, rng);
    const KronEigenWorkspace ws(k, 15);
    const Eigen::VectorXd z = simulate_z(k, 15, 0.5, 1.0, rng);
    const LambdaSearch search;
    const double cell = (std::log(search.upper) - std::log(search.lower)) / (search.grid_points - 1);
    const LambdaOptimum base = optimize_lambda_k(z, ws, search);
    for (double c : {0.01, 3.0, 250.0}) {
        const Eigen::VectorXd scaled = c * z;
        const LambdaOptimum o = optimize_lambda_k(scaled, ws, search);
        CHECK(std::abs(std::log(o.lambda) - std::log(base.lambda)) <= cell);
        CHECK(o.sigma2 == doctest::Approx(c * c * base.sigma2).epsilon(1e-6));
    }
}

TEST_CASE("search interval validation") {
    const KronEigenWorkspace ws(Eigen::MatrixXd::Identity(2, 2), 1);
    LambdaSearch bad;
    bad.lower = 0.0;
    CHECK_THROWS_AS((void)optimize_lambda_k(Eigen::Vector2d(1, 2), ws, bad), InvalidArgument);
    bad = {};
    bad.grid_points = 2;
    CHECK_THROWS_AS((void)optimize_lambda_k(Eigen::Vector2d(1, 2), ws, bad), InvalidArgument);
}

}  // TEST_SUITE
