#include "arrayem/tensor.hpp"

#include <limits>
#include <string>

namespace arrayem {

namespace {

void check_mode(const Shape& shape, Index mode) {
    if (mode < 0 || mode >= shape.order()) {
        throw InvalidArgument("mode " + std::to_string(mode) + " out of range for an order-" +
                              std::to_string(shape.order()) + " array");
    }
}

}  // namespace

Shape::Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}

Shape::Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw InvalidArgument("shape must have at least one dimension");
    size_ = 1;
    for (Index m : dims_) {
        if (m < 1) throw InvalidArgument("shape dimensions must be positive");
        if (size_ > std::numeric_limits<Index>::max() / m) throw InvalidArgument("shape too large");
        size_ *= m;
    }
}

Index Shape::stride(Index k) const {
    check_mode(*this, k);
    Index s = 1;
    for (Index j = 0; j < k; ++j) s *= dims_[static_cast<std::size_t>(j)];
    return s;
}

Shape Shape::with_dim(Index k, Index m) const {
    check_mode(*this, k);
    auto dims = dims_;
    dims[static_cast<std::size_t>(k)] = m;
    return Shape(std::move(dims));
}

void Shape::unravel(Index offset, std::span<Index> out) const {
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        out[k] = offset % dims_[k];
        offset /= dims_[k];
    }
}

std::vector<Index> Shape::unravel(Index offset) const {
    std::vector<Index> out(dims_.size());
    unravel(offset, out);
    return out;
}

Index Shape::offset(std::span<const Index> zero_based) const {
    if (zero_based.size() != dims_.size()) throw InvalidArgument("index order does not match shape");
    Index off = 0;
    for (std::size_t k = dims_.size(); k-- > 0;) {
        if (zero_based[k] < 0 || zero_based[k] >= dims_[k]) throw InvalidArgument("index out of range");
        off = off * dims_[k] + zero_based[k];
    }
    return off;
}

MultiwayArray::MultiwayArray(Shape shape) : shape_(std::move(shape)), values_(Eigen::VectorXd::Zero(shape_.size())) {}

MultiwayArray::MultiwayArray(Shape shape, Eigen::VectorXd values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw InvalidArgument("value count " + std::to_string(values_.size()) + " does not match shape size " +
                              std::to_string(shape_.size()));
    }
}

MultiwayArray MultiwayArray::constant(const Shape& shape, double value) {
    return MultiwayArray(shape, Eigen::VectorXd::Constant(shape.size(), value));
}

double MultiwayArray::at(std::initializer_list<Index> index) const {
    return values_[shape_.offset(std::span<const Index>(index.begin(), index.size()))];
}

double& MultiwayArray::at(std::initializer_list<Index> index) {
    return values_[shape_.offset(std::span<const Index>(index.begin(), index.size()))];
}

MultiwayArray& MultiwayArray::operator+=(const MultiwayArray& other) {
    if (!(shape_ == other.shape_)) throw InvalidArgument("shape mismatch in array addition");
    values_ += other.values_;
    return *this;
}

MultiwayArray& MultiwayArray::operator-=(const MultiwayArray& other) {
    if (!(shape_ == other.shape_)) throw InvalidArgument("shape mismatch in array subtraction");
    values_ -= other.values_;
    return *this;
}

Index linear_index(std::span<const Index> one_based, const Shape& shape) {
    if (static_cast<Index>(one_based.size()) != shape.order()) {
        throw InvalidArgument("index order does not match shape");
    }
    Index j = 0;
    for (Index k = shape.order(); k-- > 0;) {
        const Index jk = one_based[static_cast<std::size_t>(k)];
        if (jk < 1 || jk > shape.dim(k)) throw InvalidArgument("index out of range");
        j = j * shape.dim(k) + (jk - 1);
    }
    return j + 1;
}

MultiwayArray inverse_rvec(const Eigen::VectorXd& v, const Shape& shape) { return MultiwayArray(shape, v); }

Eigen::MatrixXd matricize(const MultiwayArray& x, Index mode) {
    const Shape& shape = x.shape();
    check_mode(shape, mode);
    const Index left = shape.stride(mode);
    const Index mk = shape.dim(mode);
    const Index right = shape.size() / (left * mk);
    Eigen::MatrixXd out(mk, left * right);
    const double* data = x.values().data();
    for (Index r = 0; r < right; ++r) {
        for (Index j = 0; j < mk; ++j) {
            const double* src = data + left * (j + mk * r);
            for (Index l = 0; l < left; ++l) out(j, l + left * r) = src[l];
        }
    }
    return out;
}

MultiwayArray dematricize(const Eigen::MatrixXd& m, Index mode, const Shape& shape) {
    check_mode(shape, mode);
    const Index left = shape.stride(mode);
    const Index mk = shape.dim(mode);
    const Index right = shape.size() / (left * mk);
    if (m.rows() != mk || m.cols() != left * right) throw InvalidArgument("matricized view does not match shape");
    MultiwayArray out(shape);
    double* data = out.values().data();
    for (Index r = 0; r < right; ++r) {
        for (Index j = 0; j < mk; ++j) {
            double* dst = data + left * (j + mk * r);
            for (Index l = 0; l < left; ++l) dst[l] = m(j, l + left * r);
        }
    }
    return out;
}

MultiwayArray mode_multiply(const MultiwayArray& x, const Eigen::MatrixXd& a, Index mode) {
    const Shape& shape = x.shape();
    check_mode(shape, mode);
    const Index mk = shape.dim(mode);
    if (a.cols() != mk) {
        throw InvalidArgument("factor for mode " + std::to_string(mode) + " has " + std::to_string(a.cols()) +
                              " columns, expected " + std::to_string(mk));
    }
    const Index left = shape.stride(mode);
    const Index right = shape.size() / (left * mk);
    const Index out_mk = a.rows();
    MultiwayArray out(shape.with_dim(mode, out_mk));
    const double* src = x.values().data();
    double* dst = out.values().data();

    // Each right-slice is a left x m_k column-major block; the mode-k product acts on its rows.
    if (left == 1) {
        Eigen::Map<const Eigen::MatrixXd> in(src, mk, right);
        Eigen::Map<Eigen::MatrixXd> res(dst, out_mk, right);
        res.noalias() = a * in;
        return out;
    }
    for (Index r = 0; r < right; ++r) {
        Eigen::Map<const Eigen::MatrixXd> in(src + r * left * mk, left, mk);
        Eigen::Map<Eigen::MatrixXd> res(dst + r * left * out_mk, left, out_mk);
        res.noalias() = in * a.transpose();
    }
    return out;
}

MultiwayArray mode_solve_lower(const MultiwayArray& x, const Eigen::MatrixXd& lower, Index mode) {
    const Shape& shape = x.shape();
    check_mode(shape, mode);
    const Index mk = shape.dim(mode);
    if (lower.rows() != mk || lower.cols() != mk) throw InvalidArgument("triangular factor does not match mode size");
    const Index left = shape.stride(mode);
    const Index right = shape.size() / (left * mk);
    MultiwayArray out = x;
    double* data = out.values().data();
    const auto tri = lower.triangularView<Eigen::Lower>();
    if (left == 1) {
        Eigen::Map<Eigen::MatrixXd> block(data, mk, right);
        tri.solveInPlace(block);
        return out;
    }
    for (Index r = 0; r < right; ++r) {
        // block * L^{-T}: solve from the right with the upper-triangular L^T.
        Eigen::Map<Eigen::MatrixXd> block(data + r * left * mk, left, mk);
        lower.transpose().triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(block);
    }
    return out;
}

MultiwayArray tucker_multiply(std::span<const ModeFactor> factors, const MultiwayArray& x) {
    std::vector<bool> seen(static_cast<std::size_t>(x.shape().order()), false);
    for (const auto& f : factors) {
        check_mode(x.shape(), f.mode);
        if (seen[static_cast<std::size_t>(f.mode)]) throw InvalidArgument("more than one factor for a mode");
        seen[static_cast<std::size_t>(f.mode)] = true;
    }
    MultiwayArray out = x;
    for (const auto& f : factors) out = mode_multiply(out, f.matrix, f.mode);
    return out;
}

Eigen::MatrixXd kronecker_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index u = 0; u < a.rows(); ++u) {
        for (Index v = 0; v < a.cols(); ++v) {
            out.block(u * b.rows(), v * b.cols(), b.rows(), b.cols()) = a(u, v) * b;
        }
    }
    return out;
}

Eigen::MatrixXd kronecker_chain(std::span<const Eigen::MatrixXd> factors) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(1, 1);
    for (const auto& f : factors) out = kronecker_product(f, out);
    return out;
}

double square_norm(const MultiwayArray& x) { return x.values().squaredNorm(); }

}  // namespace arrayem
