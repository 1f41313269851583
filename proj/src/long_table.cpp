#include "arrayem/long_table.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "arrayem/text.hpp"

namespace arrayem {

namespace {

class LevelDictionary {
public:
    explicit LevelDictionary(const std::vector<std::string>& fixed) : fixed_(!fixed.empty()) {
        for (const auto& l : fixed) {
            if (!index_.emplace(l, static_cast<Index>(labels_.size())).second) {
                throw InvalidArgument("duplicate level '" + l + "' in a level list");
            }
            labels_.push_back(l);
        }
    }

    /// -1 when the label is unknown and the dictionary is fixed.
    Index lookup_or_add(const std::string& label) {
        const auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        if (fixed_) return -1;
        const auto q = static_cast<Index>(labels_.size());
        index_.emplace(label, q);
        labels_.push_back(label);
        return q;
    }

    [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }

private:
    bool fixed_;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, Index> index_;
};

struct Row {
    long line;
    std::vector<Index> cell;
    Index sample;
    double value;
    bool missing;
};

}  // namespace

Shape LongTable::shape() const {
    std::vector<Index> dims;
    for (const auto& l : levels) dims.push_back(static_cast<Index>(l.size()));
    return Shape(std::move(dims));
}

LongTable parse_long_table(std::istream& in, const TableSchema& schema, const std::string& source) {
    std::string line;
    long line_no = 0;
    std::vector<std::string> header;
    while (read_line(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_fields(line, schema.delimiter);
            break;
        }
    }
    if (header.empty()) throw ParseError(source, 0, "missing header row");

    std::map<std::string, std::size_t> column;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (!column.emplace(header[j], j).second) throw ParseError(source, line_no, "duplicate column '" + header[j] + "'");
    }
    auto require = [&](const std::string& name) {
        const auto it = column.find(name);
        if (it == column.end()) throw ParseError(source, line_no, "unknown column '" + name + "'");
        return it->second;
    };

    LongTable table;
    const std::size_t value_col = require(schema.value_column);
    std::optional<std::size_t> sample_col;
    if (!schema.sample_column.empty()) {
        sample_col = require(schema.sample_column);
        table.sample_column = schema.sample_column;
    } else if (column.count("sample") && schema.value_column != "sample") {
        sample_col = column["sample"];
        table.sample_column = "sample";
    }

    table.dimensions = schema.dimensions;
    if (table.dimensions.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j != value_col && (!sample_col || j != *sample_col)) table.dimensions.push_back(header[j]);
        }
    }
    if (table.dimensions.empty()) throw ParseError(source, line_no, "no dimension columns");
    std::vector<std::size_t> dim_cols;
    for (const auto& d : table.dimensions) dim_cols.push_back(require(d));
    if (!schema.levels.empty() && schema.levels.size() != table.dimensions.size()) {
        throw InvalidArgument("level lists do not match the dimension count");
    }

    std::vector<LevelDictionary> dicts;
    for (std::size_t k = 0; k < table.dimensions.size(); ++k) {
        dicts.emplace_back(schema.levels.empty() ? std::vector<std::string>{} : schema.levels[k]);
    }
    LevelDictionary samples({});

    std::vector<Row> rows;
    while (read_line(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line, schema.delimiter);
        if (fields.size() != header.size()) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        Row r{line_no, {}, 0, 0.0, false};
        for (std::size_t k = 0; k < dim_cols.size(); ++k) {
            const auto& label = fields[dim_cols[k]];
            if (label.empty()) throw ParseError(source, line_no, "empty level in column '" + table.dimensions[k] + "'");
            const Index q = dicts[k].lookup_or_add(label);
            if (q < 0) {
                throw ParseError(source, line_no, "level '" + label + "' is not listed for '" + table.dimensions[k] + "'");
            }
            r.cell.push_back(q);
        }
        if (sample_col) {
            const auto& id = fields[*sample_col];
            if (id.empty()) throw ParseError(source, line_no, "empty sample id");
            r.sample = samples.lookup_or_add(id);
        }
        const auto& v = fields[value_col];
        if (v.empty() || v == schema.missing_token) {
            r.missing = true;
        } else {
            const auto parsed = parse_double(v);
            if (!parsed || !std::isfinite(*parsed)) throw ParseError(source, line_no, "non-numeric value '" + v + "'");
            r.value = *parsed;
        }
        rows.push_back(std::move(r));
    }

    for (const auto& d : dicts) table.levels.push_back(d.labels());
    for (std::size_t k = 0; k < table.levels.size(); ++k) {
        if (table.levels[k].empty()) throw ParseError(source, 0, "dimension '" + table.dimensions[k] + "' has no levels");
    }
    table.sample_ids = samples.labels();
    const Shape shape = table.shape();
    const std::size_t n = sample_col ? table.sample_ids.size() : 1;
    if (n == 0) throw ParseError(source, 0, "no data rows");

    std::vector<std::vector<long>> seen(n, std::vector<long>(static_cast<std::size_t>(shape.size()), 0));
    table.sample.assign(n, PartialArray{MultiwayArray(shape), ObservationMask::all_missing(shape)});
    for (const auto& r : rows) {
        const Index c = shape.offset(r.cell);
        auto& first = seen[static_cast<std::size_t>(r.sample)][static_cast<std::size_t>(c)];
        if (first != 0) {
            throw ParseError(source, r.line, "duplicate key (first seen on line " + std::to_string(first) + ")");
        }
        first = r.line;
        if (!r.missing) {
            auto& obs = table.sample[static_cast<std::size_t>(r.sample)];
            obs.values[c] = r.value;
            obs.mask.set(c, true);
        }
    }
    return table;
}

LongTable load_long_table(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_long_table(in, schema, path);
}

void write_long_table(std::ostream& out, const LongTable& table, const TableWriteOptions& options) {
    const Shape shape = table.shape();
    const bool with_sample = !table.sample_column.empty();
    if (with_sample && table.sample_ids.size() != table.sample.size()) {
        throw InvalidArgument("sample ids do not match the number of arrays");
    }
    if (!with_sample && table.sample.size() != 1) throw InvalidArgument("several arrays need a sample column");
    const char d = options.delimiter;
    for (std::size_t k = 0; k < table.dimensions.size(); ++k) out << (k ? std::string(1, d) : "") << quote_field(table.dimensions[k], d);
    if (with_sample) out << d << quote_field(table.sample_column, d);
    out << d << quote_field(options.value_column, d) << '\n';

    std::vector<Index> idx(static_cast<std::size_t>(shape.order()));
    for (std::size_t l = 0; l < table.sample.size(); ++l) {
        const auto& obs = table.sample[l];
        if (!(obs.shape() == shape)) throw InvalidArgument("array shape does not match the level dictionaries");
        for (Index c = 0; c < shape.size(); ++c) {
            const bool observed = obs.mask.observed(c);
            if (!observed && !options.emit_missing) continue;
            shape.unravel(c, idx);
            for (Index k = 0; k < shape.order(); ++k) {
                if (k) out << d;
                out << quote_field(table.levels[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])], d);
            }
            if (with_sample) out << d << quote_field(table.sample_ids[l], d);
            out << d << (observed ? format_double(obs.values[c]) : options.missing_token) << '\n';
        }
    }
}

void array_to_long_table(const LongTable& table, const std::string& path, const TableWriteOptions& options) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_long_table(out, table, options);
    if (!out) throw IoError("failed writing " + path);
}

LongTable default_labels(PartialSample sample, std::vector<std::string> sample_ids) {
    if (sample.empty()) throw InvalidArgument("empty sample");
    LongTable t;
    const Shape& shape = sample.front().shape();
    for (Index k = 0; k < shape.order(); ++k) {
        t.dimensions.push_back("d" + std::to_string(k + 1));
        std::vector<std::string> lv;
        for (Index q = 0; q < shape.dim(k); ++q) lv.push_back(std::to_string(q + 1));
        t.levels.push_back(std::move(lv));
    }
    if (sample.size() > 1 || !sample_ids.empty()) {
        t.sample_column = "sample";
        if (sample_ids.empty()) {
            for (std::size_t l = 0; l < sample.size(); ++l) sample_ids.push_back(std::to_string(l + 1));
        }
        t.sample_ids = std::move(sample_ids);
    }
    t.sample = std::move(sample);
    return t;
}

}  // namespace arrayem
