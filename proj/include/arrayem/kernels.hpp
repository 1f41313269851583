#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arrayem/errors.hpp"

namespace arrayem {

struct MarkerMatrix {
    Eigen::MatrixXd w;  ///< entities x markers
    std::vector<std::string> labels;
};

/// W_c W_c^T scaled to trace n, with W_c the column-centered W when `center` is set.
[[nodiscard]] Eigen::MatrixXd marker_kernel(const Eigen::MatrixXd& w, bool center = true);

/// Entities x markers matrix of independent +-1 entries.
[[nodiscard]] Eigen::MatrixXd random_sign_markers(Index entities, Index markers, std::mt19937_64& rng);

struct LabeledKernel {
    Eigen::MatrixXd matrix;
    std::vector<std::string> labels;
    /// max |K - K^T| of the input.
    double asymmetry = 0.0;
    /// Sum of the negative eigenvalues (in magnitude) clamped to zero.
    double repair_delta = 0.0;
};

inline constexpr double kKernelAsymmetryTol = 1e-6;
inline constexpr double kKernelRepairTol = 1e-6;

/// Symmetrizes, clamps negative eigenvalues and records both repairs; rejects repairs beyond tolerance.
[[nodiscard]] LabeledKernel validate_kernel(const Eigen::MatrixXd& k, std::vector<std::string> labels);

/// Square labeled matrix file; the row and column labels must agree.
[[nodiscard]] LabeledKernel load_kernel_matrix(const std::string& path, char delimiter = ',');

/// Kernel rows and columns reordered to `levels`; every level must have a kernel label.
[[nodiscard]] Eigen::MatrixXd align_kernel(const LabeledKernel& kernel, const std::vector<std::string>& levels);

/// Header: corner cell then marker names; rows: entity label then values.
[[nodiscard]] MarkerMatrix load_marker_matrix(const std::string& path, char delimiter = ',');

}  // namespace arrayem
