#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace arrayem {

/// Shortest form that reads back to the same double, at most 17 significant digits.
[[nodiscard]] std::string format_double(double v);

/// Whole-field decimal parse; nullopt on anything else (including trailing characters).
[[nodiscard]] std::optional<double> parse_double(std::string_view text);

[[nodiscard]] std::string_view trim(std::string_view s);

/// Splits one delimited line. Double-quoted fields may contain the delimiter; "" is a literal quote.
[[nodiscard]] std::vector<std::string> split_fields(std::string_view line, char delimiter);

/// Quotes a field when it contains the delimiter, a quote or surrounding space.
[[nodiscard]] std::string quote_field(const std::string& field, char delimiter);

/// Reads the next line without its terminator (handles CRLF). Returns false at end of input.
bool read_line(std::istream& in, std::string& line);

/// Square or rectangular numeric matrix with row and column labels.
struct LabeledMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> row_labels;
    std::vector<std::string> column_labels;
};

/// First row: corner cell then column labels; every following row: label then numbers.
[[nodiscard]] LabeledMatrix read_labeled_matrix(const std::string& path, char delimiter = ',');
void write_labeled_matrix(const std::string& path, const LabeledMatrix& m, char delimiter = ',');

/// One label per non-empty line.
[[nodiscard]] std::vector<std::string> read_level_file(const std::string& path);
void write_level_file(const std::string& path, const std::vector<std::string>& labels);

}  // namespace arrayem
