#pragma once

#include <istream>
#include <string>
#include <vector>

#include "arrayem/partial.hpp"

namespace arrayem {

struct TableSchema {
    /// Dimension columns in array order; empty means every column except value and sample, in header order.
    std::vector<std::string> dimensions;
    std::string value_column = "value";
    /// Empty: use a column named "sample" when present, otherwise the file holds one array.
    std::string sample_column;
    char delimiter = ',';
    std::string missing_token = "NA";
    /// Optional fixed level order per dimension (same order as `dimensions`); empty entries mean first appearance.
    std::vector<std::vector<std::string>> levels;
};

struct LongTable {
    std::vector<std::string> dimensions;
    /// levels[k][q] is the label of index q along dimension k.
    std::vector<std::vector<std::string>> levels;
    /// Empty when the table has no sample column.
    std::string sample_column;
    std::vector<std::string> sample_ids;
    PartialSample sample;

    [[nodiscard]] Shape shape() const;
};

[[nodiscard]] LongTable parse_long_table(std::istream& in, const TableSchema& schema,
                                         const std::string& source = "<input>");
[[nodiscard]] LongTable load_long_table(const std::string& path, const TableSchema& schema = {});

struct TableWriteOptions {
    char delimiter = ',';
    std::string missing_token = "NA";
    std::string value_column = "value";
    /// Emit missing cells with the missing token (true) or leave them out.
    bool emit_missing = true;
};

/// Writes one row per cell of every array, sample-major, cells in canonical order.
void write_long_table(std::ostream& out, const LongTable& table, const TableWriteOptions& options = {});
void array_to_long_table(const LongTable& table, const std::string& path, const TableWriteOptions& options = {});

/// Table wrapper for arrays that carry no labels: levels "1".."m_k", dimensions "d1".."di".
[[nodiscard]] LongTable default_labels(PartialSample sample, std::vector<std::string> sample_ids = {});

}  // namespace arrayem
