#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "arrayem/avspmm.hpp"
#include "arrayem/config.hpp"
#include "arrayem/long_table.hpp"
#include "arrayem/missing_em.hpp"

namespace arrayem {

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// Independent generator for (root seed, stream id, purpose); the same triple always gives the same stream.
[[nodiscard]] std::mt19937_64 stream_rng(std::uint64_t root, std::uint64_t stream, std::uint64_t purpose = 0);

/// Random SPD matrix with unit (0,0) entry: A A^T / m + I / 2 for standard normal A, then rescaled.
[[nodiscard]] Eigen::MatrixXd random_spd(Index m, std::mt19937_64& rng);

[[nodiscard]] Eigen::VectorXd standard_normal(Index n, std::mt19937_64& rng);
[[nodiscard]] Eigen::VectorXd standard_uniform(Index n, std::mt19937_64& rng);

/// Cells with u < p are deleted; all others keep their complete value.
[[nodiscard]] PartialArray delete_cells(const MultiwayArray& complete, const Eigen::VectorXd& u, double p);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Pearson correlation; NaN with fewer than two pairs or zero variance.
[[nodiscard]] double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct BoxSummary {
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Linear interpolation between order statistics at position p (n - 1) (inclusive method).
[[nodiscard]] double quantile(std::vector<double> values, double p);
/// NaN entries are ignored; throws when nothing is left.
[[nodiscard]] BoxSummary box_summary(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Model specification and dispatch
// ---------------------------------------------------------------------------

struct ModelSpec {
    /// Per dimension: kernel aligned with the data levels, or nullopt for an unstructured factor.
    std::vector<std::optional<Eigen::MatrixXd>> kernels;
    std::vector<double> initial_lambda;
    MeanModel mean_model = MeanModel::Additive;
    std::vector<bool> mean_dimensions;
    FitConfig flip_flop;
    AvspmmConfig avspmm;

    [[nodiscard]] bool any_known() const;
    [[nodiscard]] std::vector<DimensionSpec> dimension_specs(const Shape& shape) const;
};

struct FitOutcome {
    ArrayNormalModel implied;
    std::optional<AvspmmModel> avspmm;
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    std::vector<MultiwayArray> imputed;
    std::vector<std::string> warnings;
};

/// Flip-Flop when every dimension is unstructured, AVSPMM otherwise.
[[nodiscard]] FitOutcome fit_model(const PartialSample& sample, const ModelSpec& spec);

/// Iteration settings shared by both algorithms (max_iterations, rel_tol, estep, route, lambda_*).
void apply_fit_settings(const Config& config, ModelSpec& spec);

// ---------------------------------------------------------------------------
// Scripted experiments
// ---------------------------------------------------------------------------

enum class Design {
    /// Unstructured Kronecker model, N arrays, Flip-Flop.
    Example1,
    /// p1 x rest AVSPMM with a marker kernel on dimension 1, additive mean on every dimension.
    Example4,
    /// p1 x rest AVSPMM with a marker kernel, trait-only mean, per-trait correlations.
    MarkerCv,
};

[[nodiscard]] std::string design_name(Design d);

struct ExperimentConfig {
    Design design = Design::Example1;
    /// Example1: the full shape. Other designs: the dimensions after the first.
    std::vector<Index> shape{6, 4, 2};
    std::vector<Index> sample_sizes{20, 50, 100};
    std::vector<double> missing{0.4, 0.3, 0.2, 0.1};
    std::vector<Index> p1_values{0};
    Index markers = 500;
    double lambda = 1.0;
    /// MarkerCv: 0-based dimension whose slices are scored separately (defaults to the last).
    Index trait_dim = -1;
    int replications = 30;
    std::uint64_t seed = 1;
    int threads = 1;
    ModelSpec fit;

    /// Defaults per design, then overridden by the keys present in `config`.
    static ExperimentConfig from_config(const Config& config);
    void validate() const;
    [[nodiscard]] std::vector<Index> full_shape(Index p1) const;
};

/// Keys understood by ExperimentConfig::from_config.
[[nodiscard]] const std::set<std::string>& experiment_keys();

struct MetricsRecord {
    std::string design;
    Index p1 = 0;
    Index n = 0;
    double missing = 0.0;
    int replication = 0;
    double correlation = 0.0;
    double mse = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Per-slice correlations along the trait dimension (MarkerCv and cv only).
    std::vector<double> slice_correlations;
    /// Empty on success; otherwise the failure message (metrics are then NaN).
    std::string error;
    double seconds = 0.0;
};

struct SimulatedReplication {
    ArrayNormalModel truth;
    std::optional<AvspmmModel> truth_avspmm;
    std::vector<MultiwayArray> complete;
    /// One uniform per cell per array; shared by every missingness level.
    std::vector<Eigen::VectorXd> uniforms;
};

/// Generating model for the design (Example1: fixed by the seed; others: fixed apart from the kernel).
[[nodiscard]] SimulatedReplication simulate_replication(const ExperimentConfig& config, Index p1, Index n,
                                                        int replication);

/// Records sorted by (p1, n, missing, replication).
[[nodiscard]] std::vector<MetricsRecord> run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Cross-validation on existing data
// ---------------------------------------------------------------------------

struct CvConfig {
    std::vector<double> holdout{0.1};
    int replications = 10;
    std::uint64_t seed = 1;
    int threads = 1;
    /// Slices scored separately along this dimension; -1 scores all held-out cells together.
    Index trait_dim = -1;
};

/**
 * Per replication: delete a random share of the observed cells, fit, and correlate the
 * imputations with the deleted values. Truly missing cells are never scored.
 */
[[nodiscard]] std::vector<MetricsRecord> run_cv(const PartialSample& data, const ModelSpec& spec,
                                                const CvConfig& config);

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records);
[[nodiscard]] std::vector<MetricsRecord> read_metrics(const std::string& path);
void write_slice_metrics(const std::string& path, const std::vector<MetricsRecord>& records);
void write_timing(const std::string& path, const std::vector<MetricsRecord>& records);

struct SummaryRow {
    std::string design;
    Index p1 = 0;
    Index n = 0;
    double missing = 0.0;
    std::string metric;
    BoxSummary box;
};

/// Quartiles of correlation and mse per design cell, cells in sorted order.
[[nodiscard]] std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records);
void write_summary(const std::string& path, const std::vector<SummaryRow>& rows);
/// One boxplot panel per metric, boxes in summary order.
void write_boxplot_svg(const std::string& path, const std::vector<SummaryRow>& rows, const std::string& metric);

/// Runs fn(0..count-1) on up to `threads` workers; the first exception is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace arrayem
