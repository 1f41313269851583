#include "arrayem/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "arrayem/text.hpp"

namespace arrayem {

namespace {

template <typename T>
std::optional<T> parse_integer(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        const auto t = trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& source) {
    Config c;
    std::string line;
    long row = 0;
    while (read_line(in, line)) {
        ++row;
        const auto hash = line.find('#');
        const auto body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source + ":" + std::to_string(row) + ": expected key=value");
        const auto key = trim(body.substr(0, eq));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(row) + ": empty key");
        c.values_[std::string(key)] = std::string(trim(body.substr(eq + 1)));
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) {
    const auto k = trim(key);
    if (k.empty()) throw ConfigError("empty key");
    values_[std::string(k)] = std::string(trim(value));
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::erase(const std::string& key) { values_.erase(key); }

std::optional<std::string> Config::find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

std::string Config::require(const std::string& key) const {
    const auto v = find(key);
    if (!v || v->empty()) throw ConfigError("missing required key '" + key + "'");
    return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    const auto d = parse_double(*v);
    if (!d || !std::isfinite(*d)) throw ConfigError("key '" + key + "': '" + *v + "' is not a number");
    return *d;
}

long Config::get_int(const std::string& key, long fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    const auto i = parse_integer<long>(*v);
    if (!i) throw ConfigError("key '" + key + "': '" + *v + "' is not an integer");
    return *i;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    const auto i = parse_integer<std::uint64_t>(*v);
    if (!i) throw ConfigError("key '" + key + "': '" + *v + "' is not an unsigned integer");
    return *i;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("key '" + key + "': '" + *v + "' is not a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v, ',')) {
        const auto d = parse_double(item);
        if (!d || !std::isfinite(*d)) throw ConfigError("key '" + key + "': '" + item + "' is not a number");
        out.push_back(*d);
    }
    return out;
}

std::vector<long> Config::get_ints(const std::string& key, std::vector<long> fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    const char sep = v->find('x') != std::string::npos ? 'x' : ',';
    std::vector<long> out;
    for (const auto& item : split_list(*v, sep)) {
        const auto i = parse_integer<long>(item);
        if (!i) throw ConfigError("key '" + key + "': '" + item + "' is not an integer");
        out.push_back(*i);
    }
    return out;
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    const auto v = find(key);
    if (!v) return {};
    return split_list(*v, ',');
}

std::map<std::string, std::string> Config::with_prefix(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (auto it = values_.lower_bound(prefix); it != values_.end() && it->first.rfind(prefix, 0) == 0; ++it) {
        out.emplace(it->first.substr(prefix.size()), it->second);
    }
    return out;
}

void Config::check_keys(const std::set<std::string>& known, const std::vector<std::string>& prefixes) const {
    for (const auto& [key, value] : values_) {
        if (known.count(key)) continue;
        bool ok = false;
        for (const auto& p : prefixes) ok = ok || (key.rfind(p, 0) == 0 && key.size() > p.size());
        if (!ok) throw ConfigError("unknown key '" + key + "'");
    }
}

std::string Config::resolved() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
}

void Config::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << resolved();
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace arrayem
