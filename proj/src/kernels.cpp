#include "arrayem/kernels.hpp"

#include <cmath>
#include <unordered_map>

#include "arrayem/text.hpp"

namespace arrayem {

Eigen::MatrixXd marker_kernel(const Eigen::MatrixXd& w, bool center) {
    if (w.rows() < 2) throw InvalidArgument("marker matrix needs at least two entities");
    if (w.cols() < 1) throw InvalidArgument("marker matrix needs at least one marker");
    if (!w.allFinite()) throw InvalidArgument("marker matrix has non-finite entries");
    Eigen::MatrixXd wc = w;
    if (center) wc.rowwise() -= w.colwise().mean();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(w.rows(), w.rows());
    k.selfadjointView<Eigen::Lower>().rankUpdate(wc);
    k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
    const double c = k.trace() / static_cast<double>(w.rows());
    if (!(c > 0.0)) throw InvalidArgument("markers have zero variance");
    return k / c;
}

Eigen::MatrixXd random_sign_markers(Index entities, Index markers, std::mt19937_64& rng) {
    Eigen::MatrixXd w(entities, markers);
    std::bernoulli_distribution coin(0.5);
    for (Index j = 0; j < markers; ++j) {
        for (Index i = 0; i < entities; ++i) w(i, j) = coin(rng) ? 1.0 : -1.0;
    }
    return w;
}

LabeledKernel validate_kernel(const Eigen::MatrixXd& k, std::vector<std::string> labels) {
    if (k.rows() != k.cols() || k.rows() == 0) throw InvalidArgument("kernel must be a non-empty square matrix");
    if (static_cast<Index>(labels.size()) != k.rows()) throw InvalidArgument("kernel labels do not match its size");
    if (!k.allFinite()) throw InvalidArgument("kernel has non-finite entries");
    LabeledKernel out;
    out.labels = std::move(labels);
    out.asymmetry = (k - k.transpose()).cwiseAbs().maxCoeff();
    if (out.asymmetry > kKernelAsymmetryTol) {
        throw InvalidArgument("kernel is not symmetric (max asymmetry " + format_double(out.asymmetry) + ")");
    }
    out.matrix = 0.5 * (k + k.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.matrix);
    const Eigen::VectorXd ev = eig.eigenvalues();
    out.repair_delta = -ev.cwiseMin(0.0).sum();
    const double trace = out.matrix.trace();
    if (out.repair_delta > kKernelRepairTol * std::abs(trace)) {
        throw InvalidArgument("kernel is not positive semi-definite: clamping eigenvalues would change it by " +
                              format_double(out.repair_delta) + " (limit " + format_double(kKernelRepairTol * std::abs(trace)) +
                              ")");
    }
    if (out.repair_delta > 0.0) {
        out.matrix = eig.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
        out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
    }
    return out;
}

LabeledKernel load_kernel_matrix(const std::string& path, char delimiter) {
    LabeledMatrix m = read_labeled_matrix(path, delimiter);
    if (m.values.rows() != m.values.cols()) {
        throw ParseError(path, 0, "kernel is " + std::to_string(m.values.rows()) + "x" + std::to_string(m.values.cols()) +
                                      ", expected square");
    }
    if (m.row_labels != m.column_labels) throw ParseError(path, 0, "row labels differ from column labels");
    try {
        return validate_kernel(m.values, std::move(m.row_labels));
    } catch (const InvalidArgument& e) {
        throw ParseError(path, 0, e.what());
    }
}

Eigen::MatrixXd align_kernel(const LabeledKernel& kernel, const std::vector<std::string>& levels) {
    std::unordered_map<std::string, Index> pos;
    for (std::size_t i = 0; i < kernel.labels.size(); ++i) pos.emplace(kernel.labels[i], static_cast<Index>(i));
    std::vector<Index> idx;
    for (const auto& l : levels) {
        const auto it = pos.find(l);
        if (it == pos.end()) throw InvalidArgument("level '" + l + "' has no row in the kernel");
        idx.push_back(it->second);
    }
    const auto m = static_cast<Index>(idx.size());
    Eigen::MatrixXd out(m, m);
    for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < m; ++i) out(i, j) = kernel.matrix(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return out;
}

MarkerMatrix load_marker_matrix(const std::string& path, char delimiter) {
    LabeledMatrix m = read_labeled_matrix(path, delimiter);
    return {std::move(m.values), std::move(m.row_labels)};
}

}  // namespace arrayem
