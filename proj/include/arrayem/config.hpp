#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "arrayem/errors.hpp"

namespace arrayem {

/**
 * Flat key=value settings. '#' starts a comment; later assignments win.
 * Typed getters throw ConfigError naming the key on malformed values.
 */
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>");
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    /// "key=value" from the command line.
    void apply_override(const std::string& assignment);
    void erase(const std::string& key);

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> find(const std::string& key) const;
    [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] std::string require(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long get_int(const std::string& key, long fallback) const;
    [[nodiscard]] std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated numbers.
    [[nodiscard]] std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
    /// Comma-separated integers; "6x4x2" is accepted too.
    [[nodiscard]] std::vector<long> get_ints(const std::string& key, std::vector<long> fallback) const;
    /// Comma-separated strings (trimmed, empty entries dropped).
    [[nodiscard]] std::vector<std::string> get_list(const std::string& key) const;
    /// Keys starting with `prefix`, with the prefix removed.
    [[nodiscard]] std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

    /// Throws ConfigError for any key not in `known` and not starting with one of `prefixes`.
    void check_keys(const std::set<std::string>& known, const std::vector<std::string>& prefixes = {}) const;

    /// Sorted key=value lines.
    [[nodiscard]] std::string resolved() const;
    void write(const std::string& path) const;

    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace arrayem
