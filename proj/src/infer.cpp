#include "stratrob/infer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stratrob/error.hpp"
#include "stratrob/parallel.hpp"

namespace stratrob::infer {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError("not a finite number: '" + s + "'", line);
    return v;
}

std::size_t to_index(const std::string& s, std::size_t line) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("not a non-negative integer: '" + s + "'", line);
    return v;
}

// Sign-gradient PGD may overshoot the radius by rounding only.
constexpr double kRadiusSlack = 1e-12;

} // namespace

void AttackLog::validate() const {
    if (d == 0 || K < 2) throw DataError("attack log needs d >= 1 and K >= 2");
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw DataError("attack log radius must be non-negative");
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::string where = "record " + std::to_string(r) + ": ";
        if (rec.x.size() != d) throw DataError(where + "feature dimension differs from d");
        if (rec.y >= K) throw DataError(where + "label outside [0, K)");
        if (mode == LogMode::Prediction) {
            if (rec.predicted >= K) throw DataError(where + "prediction outside [0, K)");
        } else {
            if (rec.delta.size() != d) throw DataError(where + "delta dimension differs from d");
            for (double v : rec.delta)
                if (!(std::abs(v) <= radius + kRadiusSlack)) throw DataError(where + "delta exceeds the declared radius");
        }
    }
}

std::string to_text(const AttackLog& log) {
    using utility::format_double;
    std::string out = "d=" + std::to_string(log.d) + ",K=" + std::to_string(log.K) + ",radius=" +
                      format_double(log.radius) + ",mode=" + (log.mode == LogMode::Prediction ? "pred" : "delta") + "\n";
    for (const auto& rec : log.records) {
        for (double v : rec.x) out += format_double(v) + ",";
        out += std::to_string(rec.y);
        if (log.mode == LogMode::Prediction) {
            out += "," + std::to_string(rec.predicted);
        } else {
            for (double v : rec.delta) out += "," + format_double(v);
        }
        out += "\n";
    }
    return out;
}

AttackLog log_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    AttackLog log;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line, ',');
        if (!header) {
            if (cells.size() != 4) throw ParseError("header must be d=<int>,K=<int>,radius=<float>,mode=<pred|delta>", lineno);
            const char* keys[] = {"d=", "K=", "radius=", "mode="};
            for (int k = 0; k < 4; ++k)
                if (cells[k].rfind(keys[k], 0) != 0) throw ParseError(std::string("expected ") + keys[k], lineno);
            log.d = to_index(cells[0].substr(2), lineno);
            log.K = to_index(cells[1].substr(2), lineno);
            log.radius = to_double(cells[2].substr(7), lineno);
            const auto mode = cells[3].substr(5);
            if (mode == "pred") log.mode = LogMode::Prediction;
            else if (mode == "delta") log.mode = LogMode::Delta;
            else throw ParseError("mode must be pred or delta", lineno);
            if (log.d == 0 || log.K < 2) throw ParseError("header needs d >= 1 and K >= 2", lineno);
            header = true;
            continue;
        }
        const std::size_t want = log.d + 1 + (log.mode == LogMode::Prediction ? 1 : log.d);
        if (cells.size() != want)
            throw ParseError("record has " + std::to_string(cells.size()) + " fields, expected " + std::to_string(want), lineno);
        AttackRecord rec;
        for (std::size_t k = 0; k < log.d; ++k) rec.x.push_back(to_double(cells[k], lineno));
        rec.y = to_index(cells[log.d], lineno);
        if (rec.y >= log.K) throw ParseError("label outside [0, K)", lineno);
        if (log.mode == LogMode::Prediction) {
            rec.predicted = to_index(cells[log.d + 1], lineno);
            if (rec.predicted >= log.K) throw ParseError("prediction outside [0, K)", lineno);
        } else {
            for (std::size_t k = 0; k < log.d; ++k) {
                const double v = to_double(cells[log.d + 1 + k], lineno);
                if (!(std::abs(v) <= log.radius + kRadiusSlack)) throw ParseError("delta exceeds the declared radius", lineno);
                rec.delta.push_back(v);
            }
        }
        log.records.push_back(std::move(rec));
    }
    if (!header) throw ParseError("missing header", lineno);
    return log;
}

void save(const AttackLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << to_text(log);
}

AttackLog load_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return log_from_text(ss.str());
}

AttackLog simulate_log(const nn::DenseNet& net, const data::Dataset& data, const UtilityMatrix& u,
                       const attack::AttackSpec& spec, LogMode mode) {
    if (u.num_classes() != data.K) throw InputError("utility K does not match the data");
    AttackLog log;
    log.d = data.d;
    log.K = data.K;
    log.radius = spec.radius;
    log.mode = mode;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t y = data.y(i);
        const TargetSet T = utility::targets_of(u, y);
        if (T.empty()) continue;
        const auto o = attack::strategic_response(net, data.x(i), y, T, spec);
        AttackRecord rec;
        rec.x.assign(data.x(i).begin(), data.x(i).end());
        rec.y = y;
        if (mode == LogMode::Prediction) rec.predicted = o.predicted;
        else rec.delta = o.delta;
        log.records.push_back(std::move(rec));
    }
    return log;
}

std::vector<std::optional<std::size_t>> infer_targets_predictions(const AttackLog& log) {
    if (log.mode != LogMode::Prediction) throw InputError("prediction-based inference needs a log of predictions");
    std::vector<std::optional<std::size_t>> out;
    out.reserve(log.records.size());
    for (const auto& rec : log.records)
        out.push_back(rec.predicted == rec.y ? std::nullopt : std::optional<std::size_t>(rec.predicted));
    return out;
}

std::vector<std::optional<std::size_t>> infer_targets_vectors(const AttackLog& log, const nn::DenseNet& net,
                                                              const attack::AttackSpec& spec, int threads) {
    if (log.mode != LogMode::Delta) throw InputError("vector-based inference needs a log of attack vectors");
    if (spec.radius != log.radius)
        throw InputError("attack radius " + utility::format_double(spec.radius) + " does not match the log's " +
                         utility::format_double(log.radius));
    if (net.input_dim() != log.d || net.num_classes() != log.K) throw InputError("network shape does not match the log");
    attack::AttackSpec sim = spec;
    sim.random_start = false;
    std::vector<std::optional<std::size_t>> out(log.records.size());
    parallel_for(log.records.size(), threads, [&](std::size_t r) {
        const auto& rec = log.records[r];
        if (rec.delta.size() != log.d) throw InputError("record " + std::to_string(r) + " has no attack vector");
        nn::Vector z = rec.x;
        for (std::size_t k = 0; k < log.d; ++k) z[k] += rec.delta[k];
        const std::size_t landed = nn::predict(net, z);
        // Equally close targets (identical simulated deltas) go to the class the
        // logged delta actually lands on, then to the lower index.
        std::optional<std::size_t> best;
        double best_dist = 0.0;
        for (std::size_t t = 0; t < log.K; ++t) {
            if (t == rec.y) continue;
            const auto o = attack::pgd_targeted(net, rec.x, t, sim);
            double dist = 0.0;
            for (std::size_t k = 0; k < log.d; ++k) dist += (o.delta[k] - rec.delta[k]) * (o.delta[k] - rec.delta[k]);
            if (!best || dist < best_dist || (dist == best_dist && t == landed)) {
                best = t;
                best_dist = dist;
            }
        }
        out[r] = best;
    });
    return out;
}

UtilityMatrix reconstruct_matrix(const AttackLog& log, const std::vector<std::optional<std::size_t>>& inferred,
                                 std::size_t K, std::size_t k) {
    if (K < 2) throw InputError("reconstruction needs K >= 2");
    if (k < 1 || k > K - 1) throw InputError("k must lie in [1, K-1]");
    if (inferred.size() != log.records.size()) throw InputError("one inferred target per record is required");
    std::vector<std::vector<std::size_t>> counts(K, std::vector<std::size_t>(K, 0));
    for (std::size_t r = 0; r < inferred.size(); ++r) {
        const std::size_t y = log.records[r].y;
        if (y >= K) throw InputError("record label outside [0, K)");
        if (!inferred[r] || *inferred[r] == y) continue;
        if (*inferred[r] >= K) throw InputError("inferred target outside [0, K)");
        ++counts[y][*inferred[r]];
    }
    std::vector<TargetSet> rows(K);
    for (std::size_t y = 0; y < K; ++y) {
        TargetSet order;
        for (std::size_t t = 0; t < K; ++t)
            if (counts[y][t] > 0) order.push_back(t);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return counts[y][a] > counts[y][b]; });
        if (order.size() > k) order.resize(k);
        rows[y] = std::move(order);
    }
    return UtilityMatrix::from_targets(K, rows);
}

InferenceMetrics inference_metrics(const std::vector<std::optional<std::size_t>>& inferred,
                                   const std::vector<TargetSet>& record_truth, const UtilityMatrix& reconstructed,
                                   const UtilityMatrix& truth) {
    if (inferred.size() != record_truth.size()) throw InputError("one truth target set per record is required");
    if (reconstructed.num_classes() != truth.num_classes()) throw InputError("matrix shapes differ");
    InferenceMetrics m;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < inferred.size(); ++r) {
        if (!inferred[r]) continue;
        ++m.included;
        const auto& T = record_truth[r];
        if (std::find(T.begin(), T.end(), *inferred[r]) != T.end()) ++hits;
    }
    m.target_accuracy = m.included ? static_cast<double>(hits) / static_cast<double>(m.included) : 0.0;
    const std::size_t K = truth.num_classes();
    std::size_t agree = 0;
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t t = 0; t < K; ++t)
            if (t != y && reconstructed(y, t) == truth(y, t)) ++agree;
    m.entries_recovered = K > 1 ? static_cast<double>(agree) / static_cast<double>(K * (K - 1)) : 1.0;
    return m;
}

std::vector<TargetSet> record_truth(const AttackLog& log, const UtilityMatrix& u) {
    if (u.num_classes() != log.K) throw InputError("utility K does not match the log");
    std::vector<TargetSet> out;
    for (const auto& rec : log.records) out.push_back(utility::targets_of(u, rec.y));
    return out;
}

} // namespace stratrob::infer
