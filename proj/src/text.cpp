#include "arrayem/text.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "arrayem/errors.hpp"

namespace arrayem {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && trim(field).empty()) {
            field.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == delimiter) {
            out.push_back(was_quoted ? field : std::string(trim(field)));
            field.clear();
            was_quoted = false;
        } else {
            field.push_back(c);
        }
    }
    out.push_back(was_quoted ? field : std::string(trim(field)));
    return out;
}

std::string quote_field(const std::string& field, char delimiter) {
    const bool needs = field.find(delimiter) != std::string::npos || field.find('"') != std::string::npos ||
                       (!field.empty() && (field.front() == ' ' || field.back() == ' '));
    if (!needs) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

LabeledMatrix read_labeled_matrix(const std::string& path, char delimiter) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    long row = 0;
    LabeledMatrix out;
    std::vector<std::vector<double>> rows;
    while (read_line(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line, delimiter);
        if (out.column_labels.empty() && rows.empty() && out.row_labels.empty()) {
            if (fields.size() < 2) throw ParseError(path, row, "header needs a corner cell and at least one label");
            out.column_labels.assign(fields.begin() + 1, fields.end());
            continue;
        }
        if (fields.size() != out.column_labels.size() + 1) {
            throw ParseError(path, row, "expected " + std::to_string(out.column_labels.size() + 1) + " fields, found " +
                                            std::to_string(fields.size()));
        }
        out.row_labels.push_back(fields[0]);
        std::vector<double> values;
        for (std::size_t j = 1; j < fields.size(); ++j) {
            const auto v = parse_double(fields[j]);
            if (!v || !std::isfinite(*v)) throw ParseError(path, row, "non-numeric entry '" + fields[j] + "'");
            values.push_back(*v);
        }
        rows.push_back(std::move(values));
    }
    if (out.column_labels.empty()) throw ParseError(path, 0, "empty matrix file");
    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.column_labels.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return out;
}

void write_labeled_matrix(const std::string& path, const LabeledMatrix& m, char delimiter) {
    if (static_cast<Eigen::Index>(m.row_labels.size()) != m.values.rows() ||
        static_cast<Eigen::Index>(m.column_labels.size()) != m.values.cols()) {
        throw InvalidArgument("matrix labels do not match its size");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "label";
    for (const auto& c : m.column_labels) out << delimiter << quote_field(c, delimiter);
    out << '\n';
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        out << quote_field(m.row_labels[static_cast<std::size_t>(i)], delimiter);
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) out << delimiter << format_double(m.values(i, j));
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

std::vector<std::string> read_level_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (read_line(in, line)) {
        const auto t = trim(line);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

void write_level_file(const std::string& path, const std::vector<std::string>& labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& l : labels) out << l << '\n';
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace arrayem
