#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stratrob::cli {

/// Flat "key = value" document. '#' starts a comment; keys are unique.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    /// Throws ConfigError naming the key when it is absent.
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_seed() const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::int64_t> get_ints(const std::string& key) const;

    /// Throws ConfigError on the first key outside the known set.
    void check_known() const;

    /// "key=value\n" lines in key order, restricted to keys starting with one of the prefixes.
    std::string canonical(const std::vector<std::string>& prefixes) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

/// Hash of every key that influences training (data, model, objective, seed).
std::string training_hash(const Config& cfg);

std::vector<std::string> split_list(const std::string& text, char sep = ',');

} // namespace stratrob::cli
