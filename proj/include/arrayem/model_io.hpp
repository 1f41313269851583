#pragma once

#include <string>
#include <vector>

#include "arrayem/config.hpp"
#include "arrayem/harness.hpp"
#include "arrayem/long_table.hpp"

namespace arrayem {

/// Data-file keys: value_column, sample_column, delimiter (comma|tab), missing_token, dims, levels.<dim>.
[[nodiscard]] TableSchema table_schema(const Config& config);
[[nodiscard]] char delimiter_of(const Config& config);

/**
 * Model keys: kernel.<dim> (kernel file; makes the dimension Known), lambda.<dim> (initial ratio),
 * mean (additive|cellwise), mean_dims (dimension names in the additive mean), warm_start (fit directory),
 * plus the iteration settings of apply_fit_settings.
 */
[[nodiscard]] ModelSpec model_spec(const Config& config, const LongTable& table);

/**
 * Fit directory layout: model.cfg, levels_<k>.txt, mean.csv, sigma_<k>.csv (implied factor),
 * beta_<k>.csv (additive mean), trace.csv. k is the 1-based dimension number.
 */
void write_fit(const std::string& dir, const LongTable& table, const FitOutcome& fit);

/// Level order stored with a fit, by dimension.
[[nodiscard]] std::vector<std::vector<std::string>> read_fit_levels(const std::string& dir);

/// Implied array-normal model of a fit, checked against the table's dimensions and levels.
[[nodiscard]] ArrayNormalModel read_fit_model(const std::string& dir, const LongTable& table);

/// Writes conditional means for exactly the cells missing in `table` (dimension labels, optional sample, value).
/// Returns the number of rows written.
std::size_t write_imputed(const std::string& path, const LongTable& table, const ArrayNormalModel& model,
                          char delimiter = ',');

}  // namespace arrayem
