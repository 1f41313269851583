#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "arrayem/harness.hpp"
#include "arrayem/text.hpp"

namespace arrayem {

namespace {

std::string cell(double v) { return std::isnan(v) ? "NA" : format_double(v); }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path);
}

std::string key_prefix(const MetricsRecord& r) {
    return quote_field(r.design, ',') + "," + std::to_string(r.p1) + "," + std::to_string(r.n) + "," +
           format_double(r.missing) + "," + std::to_string(r.replication);
}

const char* kMetricsHeader = "design,p1,n,missing,replication,correlation,mse,iterations,converged,error";

}  // namespace

void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records) {
    auto out = open_out(path);
    out << kMetricsHeader << '\n';
    for (const auto& r : records) {
        out << key_prefix(r) << ',' << cell(r.correlation) << ',' << cell(r.mse) << ',' << r.iterations << ','
            << (r.converged ? "true" : "false") << ',' << quote_field(r.error, ',') << '\n';
    }
    finish(out, path);
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    long row = 0;
    if (!read_line(in, line)) throw ParseError(path, 0, "empty metrics file");
    ++row;
    const auto header = split_fields(line, ',');
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;
    for (const char* name : {"design", "p1", "n", "missing", "replication", "correlation", "mse"}) {
        if (!col.count(name)) throw ParseError(path, 1, std::string("missing column '") + name + "'");
    }
    auto number = [&](const std::vector<std::string>& f, const char* name) {
        const auto& s = f[col[name]];
        if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
        const auto v = parse_double(s);
        if (!v) throw ParseError(path, row, std::string("column '") + name + "': '" + s + "' is not a number");
        return *v;
    };
    std::vector<MetricsRecord> out;
    while (read_line(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto f = split_fields(line, ',');
        if (f.size() != header.size()) throw ParseError(path, row, "wrong number of fields");
        MetricsRecord r;
        r.design = f[col["design"]];
        r.p1 = static_cast<Index>(number(f, "p1"));
        r.n = static_cast<Index>(number(f, "n"));
        r.missing = number(f, "missing");
        r.replication = static_cast<int>(number(f, "replication"));
        r.correlation = number(f, "correlation");
        r.mse = number(f, "mse");
        if (col.count("iterations")) r.iterations = static_cast<int>(number(f, "iterations"));
        if (col.count("converged")) r.converged = f[col["converged"]] == "true";
        if (col.count("error")) r.error = f[col["error"]];
        out.push_back(std::move(r));
    }
    return out;
}

void write_slice_metrics(const std::string& path, const std::vector<MetricsRecord>& records) {
    auto out = open_out(path);
    out << "design,p1,n,missing,replication,slice,correlation\n";
    for (const auto& r : records) {
        for (std::size_t s = 0; s < r.slice_correlations.size(); ++s) {
            out << key_prefix(r) << ',' << (s + 1) << ',' << cell(r.slice_correlations[s]) << '\n';
        }
    }
    finish(out, path);
}

void write_timing(const std::string& path, const std::vector<MetricsRecord>& records) {
    auto out = open_out(path);
    out << "design,p1,n,missing,replication,seconds\n";
    for (const auto& r : records) out << key_prefix(r) << ',' << format_double(r.seconds) << '\n';
    finish(out, path);
}

std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records) {
    using Key = std::tuple<std::string, Index, Index, double>;
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : records) {
        auto& g = groups[Key{r.design, r.p1, r.n, r.missing}];
        g.first.push_back(r.correlation);
        g.second.push_back(r.mse);
    }
    std::vector<SummaryRow> out;
    for (const auto& [key, values] : groups) {
        for (const auto* metric : {"correlation", "mse"}) {
            const auto& v = std::string(metric) == "correlation" ? values.first : values.second;
            if (std::all_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) continue;
            out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), metric, box_summary(v)});
        }
    }
    return out;
}

void write_summary(const std::string& path, const std::vector<SummaryRow>& rows) {
    auto out = open_out(path);
    out << "design,p1,n,missing,metric,count,min,q1,median,q3,max\n";
    for (const auto& r : rows) {
        out << quote_field(r.design, ',') << ',' << r.p1 << ',' << r.n << ',' << format_double(r.missing) << ','
            << r.metric << ',' << r.box.count << ',' << format_double(r.box.min) << ',' << format_double(r.box.q1)
            << ',' << format_double(r.box.median) << ',' << format_double(r.box.q3) << ','
            << format_double(r.box.max) << '\n';
    }
    finish(out, path);
}

void write_boxplot_svg(const std::string& path, const std::vector<SummaryRow>& rows, const std::string& metric) {
    std::vector<const SummaryRow*> boxes;
    for (const auto& r : rows) {
        if (r.metric == metric) boxes.push_back(&r);
    }
    if (boxes.empty()) throw InvalidArgument("no summary rows for metric '" + metric + "'");
    double lo = boxes.front()->box.min;
    double hi = boxes.front()->box.max;
    for (const auto* b : boxes) {
        lo = std::min(lo, b->box.min);
        hi = std::max(hi, b->box.max);
    }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double left = 70.0;
    const double top = 30.0;
    const double plot_h = 300.0;
    const double step = 48.0;
    const double width = left + step * static_cast<double>(boxes.size()) + 20.0;
    const double height = top + plot_h + 110.0;
    auto y = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    out << "<text x=\"" << num(left) << "\" y=\"18\" font-size=\"13\">" << metric << "</text>\n";
    out << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
        << num(top + plot_h) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y(v) + 3) << "\" text-anchor=\"end\">"
            << format_double(std::round(v * 1e4) / 1e4) << "</text>\n";
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i]->box;
        const double cx = left + step * (static_cast<double>(i) + 0.5);
        const double w = step * 0.3;
        out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(b.max)) << "\" x2=\"" << num(cx) << "\" y2=\""
            << num(y(b.min)) << "\" stroke=\"black\"/>\n";
        out << "<rect x=\"" << num(cx - w) << "\" y=\"" << num(y(b.q3)) << "\" width=\"" << num(2 * w)
            << "\" height=\"" << num(std::max(0.5, y(b.q1) - y(b.q3))) << "\" fill=\"#cfe0f3\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << num(cx - w) << "\" y1=\"" << num(y(b.median)) << "\" x2=\"" << num(cx + w)
            << "\" y2=\"" << num(y(b.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        const auto& r = *boxes[i];
        std::string label = (r.p1 > 0 ? "p1=" + std::to_string(r.p1) + " " : "") + "n=" + std::to_string(r.n) +
                            " p=" + format_double(r.missing);
        out << "<text transform=\"translate(" << num(cx + 3) << "," << num(top + plot_h + 8)
            << ") rotate(60)\">" << label << "</text>\n";
    }
    out << "</svg>\n";
    finish(out, path);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex m;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            {
                std::lock_guard<std::mutex> lock(m);
                if (failure) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(m);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min(threads, count);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace arrayem
