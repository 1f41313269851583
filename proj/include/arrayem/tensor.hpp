#pragma once

#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arrayem/errors.hpp"

namespace arrayem {

/**
 * Dimensions (m_1, ..., m_i) of an order-i array.
 *
 * Modes are addressed 0-based in the C++ API (mode 0 is the first dimension).
 */
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<Index> dims);
    explicit Shape(std::vector<Index> dims);

    [[nodiscard]] Index order() const noexcept { return static_cast<Index>(dims_.size()); }
    [[nodiscard]] Index dim(Index k) const { return dims_.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] const std::vector<Index>& dims() const noexcept { return dims_; }
    /// Total cell count, prod_k m_k.
    [[nodiscard]] Index size() const noexcept { return size_; }
    /// prod_{j<k} m_j: distance between consecutive levels of mode k in canonical order.
    [[nodiscard]] Index stride(Index k) const;
    /// prod_{j != k} m_j: number of mode-k fibers.
    [[nodiscard]] Index complement(Index k) const { return size_ / dim(k); }
    [[nodiscard]] Shape with_dim(Index k, Index m) const;

    /// 0-based multi-index of a 0-based canonical offset.
    void unravel(Index offset, std::span<Index> out) const;
    [[nodiscard]] std::vector<Index> unravel(Index offset) const;
    [[nodiscard]] Index offset(std::span<const Index> zero_based) const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<Index> dims_;
    Index size_ = 0;
};

/// Dense order-i real array stored dimension-1 fastest, so the value vector is rvec(X).
class MultiwayArray {
public:
    MultiwayArray() = default;
    explicit MultiwayArray(Shape shape);
    MultiwayArray(Shape shape, Eigen::VectorXd values);

    static MultiwayArray constant(const Shape& shape, double value);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] Index size() const noexcept { return shape_.size(); }
    [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
    [[nodiscard]] Eigen::VectorXd& values() noexcept { return values_; }

    [[nodiscard]] double operator[](Index offset) const { return values_[offset]; }
    [[nodiscard]] double& operator[](Index offset) { return values_[offset]; }
    /// Element at a 0-based multi-index.
    [[nodiscard]] double at(std::initializer_list<Index> index) const;
    [[nodiscard]] double& at(std::initializer_list<Index> index);

    MultiwayArray& operator+=(const MultiwayArray& other);
    MultiwayArray& operator-=(const MultiwayArray& other);
    friend MultiwayArray operator+(MultiwayArray a, const MultiwayArray& b) { return a += b; }
    friend MultiwayArray operator-(MultiwayArray a, const MultiwayArray& b) { return a -= b; }
    friend bool operator==(const MultiwayArray& a, const MultiwayArray& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    Eigen::VectorXd values_;
};

/**
 * Position of a cell in rvec order, using 1-based indices throughout:
 * j = (j_i - 1) m_{i-1}...m_1 + ... + (j_2 - 1) m_1 + j_1.
 */
[[nodiscard]] Index linear_index(std::span<const Index> one_based, const Shape& shape);

[[nodiscard]] inline const Eigen::VectorXd& rvec(const MultiwayArray& x) { return x.values(); }
[[nodiscard]] MultiwayArray inverse_rvec(const Eigen::VectorXd& v, const Shape& shape);

/// Mode-k unfolding: m_k rows, one column per fiber, fibers in canonical order of the other modes.
[[nodiscard]] Eigen::MatrixXd matricize(const MultiwayArray& x, Index mode);
[[nodiscard]] MultiwayArray dematricize(const Eigen::MatrixXd& m, Index mode, const Shape& shape);

struct ModeFactor {
    Index mode;
    Eigen::MatrixXd matrix;
};

/// X multiplied by `a` along one mode; a.cols() must equal m_mode.
[[nodiscard]] MultiwayArray mode_multiply(const MultiwayArray& x, const Eigen::MatrixXd& a, Index mode);

/// X multiplied along `mode` by L^{-1} for a lower-triangular L, via triangular solves.
[[nodiscard]] MultiwayArray mode_solve_lower(const MultiwayArray& x, const Eigen::MatrixXd& lower, Index mode);

/// R-matrix (Tucker / n-mode) product. Modes without a factor are left unchanged.
[[nodiscard]] MultiwayArray tucker_multiply(std::span<const ModeFactor> factors, const MultiwayArray& x);

/// A ⊗ B with block (u, v) equal to A(u, v) * B.
[[nodiscard]] Eigen::MatrixXd kronecker_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// F_{i-1} ⊗ ... ⊗ F_0, the ordering that matches rvec.
[[nodiscard]] Eigen::MatrixXd kronecker_chain(std::span<const Eigen::MatrixXd> factors);

[[nodiscard]] double square_norm(const MultiwayArray& x);

}  // namespace arrayem
