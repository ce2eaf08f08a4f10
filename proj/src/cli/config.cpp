#include "stratrob/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "stratrob/error.hpp"

namespace stratrob::cli {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "data.source", "data.path", "data.partition", "data.K",
        "synth.K", "synth.d", "synth.groups", "synth.intra_sep", "synth.inter_sep", "synth.n_per_class", "synth.noise_sd",
        "split.test_fraction",
        "model.hidden",
        "train.objective", "train.epochs", "train.batch_size", "train.lr", "train.momentum", "train.lr_drops",
        "train.attack", "train.noise_eps", "train.fallback",
        "objective.utility", "objective.set", "objective.eps",
        "eval.suite", "eval.attack", "eval.backend", "eval.grid_points", "eval.utility", "eval.set",
        "eval.distribution", "eval.landscape.bins", "eval.landscape.per_bin",
        "eval.deflection.strategic", "eval.deflection.adversarial", "eval.deflection.clean",
        "infer.log", "infer.method", "infer.k", "infer.truth", "infer.attack", "infer.checkpoint",
        "sweep.eps", "sweep.seeds",
    };
    return keys;
}

const std::vector<std::string> kTrainingPrefixes = {"seed", "data.", "synth.", "split.", "model.", "train.", "objective."};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (cfg.has(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("key '" + key + "' must be a number, got '" + s + "'");
    return v;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
    const auto& s = get(key);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("key '" + key + "' must be an integer, got '" + s + "'");
    return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_seed() const {
    const auto& s = get("seed");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("key 'seed' must be a non-negative integer, got '" + s + "'");
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("key '" + key + "' must be true or false, got '" + s + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get(key))) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || !std::isfinite(v))
            throw ConfigError("key '" + key + "' must be a list of numbers, got '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::int64_t> Config::get_ints(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(get(key))) {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError("key '" + key + "' must be a list of integers, got '" + item + "'");
        out.push_back(v);
    }
    return out;
}

void Config::check_known() const {
    for (const auto& [k, v] : values_)
        if (!known_keys().count(k)) throw ConfigError("unknown key '" + k + "'");
}

std::string Config::canonical(const std::vector<std::string>& prefixes) const {
    std::string out;
    for (const auto& [k, v] : values_) {
        const bool keep = std::any_of(prefixes.begin(), prefixes.end(),
                                      [&](const std::string& p) { return k == p || k.rfind(p, 0) == 0; });
        if (keep) out += k + "=" + v + "\n";
    }
    return out;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string training_hash(const Config& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.canonical(kTrainingPrefixes))));
    return buf;
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

} // namespace stratrob::cli
