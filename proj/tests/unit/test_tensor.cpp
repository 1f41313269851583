#include <doctest.h>

#include <array>

#include "arrayem/tensor.hpp"
#include "support.hpp"

using namespace arrayem;

namespace {

// Elementwise sum over every mode: Y[j] = sum_i prod_k A_k(j_k, i_k) X[i].
MultiwayArray nested_sum_tucker(const std::vector<Eigen::MatrixXd>& a, const MultiwayArray& x) {
    std::vector<Index> out_dims;
    for (const auto& m : a) out_dims.push_back(m.rows());
    const Shape out_shape(out_dims);
    MultiwayArray y(out_shape);
    for (Index o = 0; o < out_shape.size(); ++o) {
        const auto j = out_shape.unravel(o);
        double s = 0.0;
        for (Index c = 0; c < x.size(); ++c) {
            const auto i = x.shape().unravel(c);
            double w = x[c];
            for (std::size_t k = 0; k < a.size(); ++k) w *= a[k](j[k], i[k]);
            s += w;
        }
        y[o] = s;
    }
    return y;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("linear index follows the 1-based rvec formula") {
    const Shape s{3, 4, 2};
    const std::array<Index, 3> first{1, 1, 1};
    const std::array<Index, 3> last{3, 4, 2};
    const std::array<Index, 3> mid{2, 3, 2};
    CHECK(linear_index(first, s) == 1);
    CHECK(linear_index(last, s) == 24);
    CHECK(linear_index(mid, s) == (2 - 1) * 12 + (3 - 1) * 3 + 2);
    const std::array<Index, 3> bad{4, 1, 1};
    CHECK_THROWS_AS((void)linear_index(bad, s), InvalidArgument);
}

TEST_CASE("rvec stacks columns") {
    MultiwayArray x(Shape{2, 2});
    x.at({0, 0}) = 1;
    x.at({1, 0}) = 2;
    x.at({0, 1}) = 3;
    x.at({1, 1}) = 4;
    CHECK(rvec(x) == Eigen::Vector4d(1, 2, 3, 4));

    std::mt19937_64 rng(3);
    const Eigen::MatrixXd m = oracle::random_matrix(2, 3, rng);
    MultiwayArray y(Shape{2, 3});
    for (Index j = 0; j < 3; ++j)
        for (Index i = 0; i < 2; ++i) y.at({i, j}) = m(i, j);
    Index pos = 0;
    for (Index j = 0; j < 3; ++j)
        for (Index i = 0; i < 2; ++i) CHECK(rvec(y)[pos++] == m(i, j));
}

TEST_CASE("rvec and matricize are exact bijections") {
    std::mt19937_64 rng(5);
    const MultiwayArray x = oracle::random_array(Shape{3, 4, 2}, rng);
    CHECK(inverse_rvec(rvec(x), x.shape()) == x);
    CHECK_THROWS_AS((void)inverse_rvec(Eigen::VectorXd::Zero(5), x.shape()), InvalidArgument);
    for (Index k = 0; k < 3; ++k) CHECK(dematricize(matricize(x, k), k, x.shape()) == x);
    const MultiwayArray z = oracle::random_array(Shape{2, 3, 4}, rng);
    CHECK(dematricize(matricize(z, 2), 2, z.shape()) == z);
    CHECK_THROWS_AS((void)matricize(z, 3), InvalidArgument);
}

TEST_CASE("matricize of a matrix") {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd m = oracle::random_matrix(2, 3, rng);
    const MultiwayArray x(Shape{2, 3}, Eigen::Map<const Eigen::VectorXd>(m.data(), 6));
    CHECK(matricize(x, 0) == m);
    CHECK(matricize(x, 1) == m.transpose());
}

TEST_CASE("matricize columns follow canonical order of the other modes") {
    MultiwayArray x(Shape{2, 3, 2});
    for (Index c = 0; c < x.size(); ++c) x[c] = static_cast<double>(c);
    const Eigen::MatrixXd m1 = matricize(x, 1);
    REQUIRE(m1.rows() == 3);
    REQUIRE(m1.cols() == 4);
    // column q enumerates (i0, i2) with i0 fastest
    for (Index i2 = 0; i2 < 2; ++i2)
        for (Index i0 = 0; i0 < 2; ++i0)
            for (Index i1 = 0; i1 < 3; ++i1) CHECK(m1(i1, i0 + 2 * i2) == x.at({i0, i1, i2}));
}

TEST_CASE("tucker product against the nested-sum definition") {
    std::mt19937_64 rng(11);
    const Shape s{2, 3, 2};
    const MultiwayArray x = oracle::random_array(s, rng);
    const std::vector<Eigen::MatrixXd> a{oracle::random_matrix(3, 2, rng), oracle::random_matrix(2, 3, rng),
                                         oracle::random_matrix(4, 2, rng)};
    const std::vector<ModeFactor> f{{0, a[0]}, {1, a[1]}, {2, a[2]}};
    const MultiwayArray y = tucker_multiply(f, x);
    const MultiwayArray oracle_y = nested_sum_tucker(a, x);
    REQUIRE(y.shape() == oracle_y.shape());
    CHECK((rvec(y) - rvec(oracle_y)).norm() <= 1e-12 * rvec(oracle_y).norm());
}

TEST_CASE("identity factors leave the array unchanged") {
    std::mt19937_64 rng(13);
    const MultiwayArray x = oracle::random_array(Shape{2, 3, 4}, rng);
    const std::vector<ModeFactor> f{{0, Eigen::MatrixXd::Identity(2, 2)}, {2, Eigen::MatrixXd::Identity(4, 4)}};
    CHECK(tucker_multiply(f, x) == x);
    CHECK(tucker_multiply({}, x) == x);
}

TEST_CASE("order-2 tucker product is (B ⊗ A) rvec(X)") {
    std::mt19937_64 rng(17);
    const MultiwayArray x = oracle::random_array(Shape{3, 2}, rng);
    const Eigen::MatrixXd a = oracle::random_matrix(4, 3, rng);
    const Eigen::MatrixXd b = oracle::random_matrix(2, 2, rng);
    const std::vector<ModeFactor> f{{0, a}, {1, b}};
    const Eigen::VectorXd dense = oracle::kron(b, a) * rvec(x);
    CHECK((rvec(tucker_multiply(f, x)) - dense).norm() <= 1e-12 * dense.norm());
}

TEST_CASE("mode-2 permutation swaps slices") {
    MultiwayArray x(Shape{2, 2, 2});
    for (Index c = 0; c < 8; ++c) x[c] = static_cast<double>(c + 1);
    Eigen::MatrixXd p(2, 2);
    p << 0, 1, 1, 0;
    const MultiwayArray y = mode_multiply(x, p, 1);
    for (Index i = 0; i < 2; ++i)
        for (Index k = 0; k < 2; ++k) {
            CHECK(y.at({i, 0, k}) == x.at({i, 1, k}));
            CHECK(y.at({i, 1, k}) == x.at({i, 0, k}));
        }
}

TEST_CASE("tucker properties on random order-3 instances") {
    std::mt19937_64 rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        const Shape s{2 + rep % 3, 3, 2 + rep % 2};
        const MultiwayArray x = oracle::random_array(s, rng);
        const Index k = rep % 3;
        const Eigen::MatrixXd a = oracle::random_matrix(s.dim(k), s.dim(k), rng);
        const Eigen::MatrixXd b = oracle::random_matrix(s.dim(k), s.dim(k), rng);

        // mode composition
        const Eigen::VectorXd lhs = rvec(mode_multiply(mode_multiply(x, b, k), a, k));
        const Eigen::VectorXd rhs = rvec(mode_multiply(x, a * b, k));
        CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));

        // distinct modes commute
        const Index j = (k + 1) % 3;
        const Eigen::MatrixXd c = oracle::random_matrix(s.dim(j), s.dim(j), rng);
        const Eigen::VectorXd ab = rvec(mode_multiply(mode_multiply(x, a, k), c, j));
        const Eigen::VectorXd ba = rvec(mode_multiply(mode_multiply(x, c, j), a, k));
        CHECK((ab - ba).norm() <= 1e-12 * std::max(1.0, ab.norm()));

        // vectorization identity
        std::vector<Eigen::MatrixXd> all;
        std::vector<ModeFactor> f;
        for (Index m = 0; m < 3; ++m) {
            all.push_back(oracle::random_matrix(s.dim(m), s.dim(m), rng));
            f.push_back({m, all.back()});
        }
        const Eigen::VectorXd dense = oracle::dense_lambda(all) * rvec(x);
        CHECK((rvec(tucker_multiply(f, x)) - dense).norm() <= 1e-10 * dense.norm());

        // matricize interchange
        const Eigen::MatrixXd direct = a * matricize(x, k);
        CHECK((matricize(mode_multiply(x, a, k), k) - direct).norm() <= 1e-12 * std::max(1.0, direct.norm()));
    }
}

TEST_CASE("tucker rejects mismatched factors") {
    std::mt19937_64 rng(23);
    const MultiwayArray x = oracle::random_array(Shape{2, 3}, rng);
    CHECK_THROWS_AS((void)mode_multiply(x, Eigen::MatrixXd::Identity(3, 3), 0), InvalidArgument);
    const std::vector<ModeFactor> twice{{0, Eigen::MatrixXd::Identity(2, 2)}, {0, Eigen::MatrixXd::Identity(2, 2)}};
    CHECK_THROWS_AS((void)tucker_multiply(twice, x), InvalidArgument);
}

TEST_CASE("mode_solve_lower inverts a triangular mode product") {
    std::mt19937_64 rng(29);
    const MultiwayArray x = oracle::random_array(Shape{3, 4, 2}, rng);
    const Eigen::MatrixXd l = oracle::random_spd(4, rng).llt().matrixL();
    const MultiwayArray y = mode_solve_lower(mode_multiply(x, l, 1), l, 1);
    CHECK((rvec(y) - rvec(x)).norm() <= 1e-12 * rvec(x).norm());
}

TEST_CASE("kronecker product") {
    CHECK(kronecker_product(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3)) ==
          Eigen::MatrixXd::Identity(6, 6));

    Eigen::MatrixXd a(2, 2);
    a << 1, 2, 3, 4;
    Eigen::MatrixXd b(2, 2);
    b << 0, 1, 1, 0;
    Eigen::MatrixXd expected(4, 4);
    expected << 0, 1, 0, 2,
                1, 0, 2, 0,
                0, 3, 0, 4,
                3, 0, 4, 0;
    CHECK(kronecker_product(a, b) == expected);

    std::mt19937_64 rng(31);
    const Eigen::MatrixXd p = oracle::random_matrix(2, 2, rng);
    const Eigen::MatrixXd q = oracle::random_matrix(2, 2, rng);
    const Eigen::MatrixXd r = oracle::random_matrix(2, 2, rng);
    const Eigen::MatrixXd t = oracle::random_matrix(2, 2, rng);
    const Eigen::MatrixXd lhs = kronecker_product(p, q) * kronecker_product(r, t);
    CHECK((lhs - kronecker_product(p * r, q * t)).norm() <= 1e-12 * lhs.norm());

    const Eigen::MatrixXd c = oracle::random_matrix(3, 2, rng);
    CHECK((kronecker_product(c, p) - oracle::kron(c, p)).norm() == 0.0);
    const std::vector<Eigen::MatrixXd> chain{p, c, q};
    CHECK((kronecker_chain(chain) - oracle::dense_lambda(chain)).norm() == 0.0);
}

TEST_CASE("square norm") {
    CHECK(square_norm(MultiwayArray::constant(Shape{3, 2}, 0.0)) == 0.0);
    CHECK(square_norm(MultiwayArray::constant(Shape{2, 2}, 1.0)) == 4.0);
    std::mt19937_64 rng(37);
    const MultiwayArray x = oracle::random_array(Shape{3, 2, 2}, rng);
    CHECK(square_norm(x) == doctest::Approx(rvec(x).dot(rvec(x))).epsilon(1e-14));
}

}  // TEST_SUITE
