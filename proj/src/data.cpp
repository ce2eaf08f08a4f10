#include "stratrob/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stratrob/error.hpp"
#include "stratrob/rng.hpp"

namespace stratrob::data {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto c = line.find(',', pos);
        out.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
    }
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

// Regular simplex of n points with the given edge, in n-1 coordinates (Helmert basis).
std::vector<std::vector<double>> regular_simplex(std::size_t n, double edge) {
    std::vector<std::vector<double>> pts(n, std::vector<double>(n > 0 ? n - 1 : 0, 0.0));
    const double scale = edge / std::sqrt(2.0);
    for (std::size_t j = 1; j < n; ++j) {
        const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
        for (std::size_t i = 0; i < n; ++i) {
            double h = 0.0;
            if (i < j) h = 1.0 / norm;
            else if (i == j) h = -static_cast<double>(j) / norm;
            pts[i][j - 1] = h * scale;
        }
    }
    return pts;
}

// Centres the points and expresses them in an orthonormal basis of their span.
std::vector<std::vector<double>> embed_minimal(std::vector<std::vector<double>> pts) {
    const std::size_t n = pts.size(), D = pts.front().size();
    std::vector<double> mean(D, 0.0);
    for (const auto& p : pts)
        for (std::size_t k = 0; k < D; ++k) mean[k] += p[k] / static_cast<double>(n);
    for (auto& p : pts)
        for (std::size_t k = 0; k < D; ++k) p[k] -= mean[k];

    std::vector<std::vector<double>> basis;
    for (const auto& p : pts) {
        std::vector<double> v = p;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
                for (std::size_t k = 0; k < D; ++k) v[k] -= dot * b[k];
            }
        const double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (nv > 1e-9) {
            for (auto& a : v) a /= nv;
            basis.push_back(std::move(v));
        }
    }
    std::vector<std::vector<double>> coords;
    for (const auto& p : pts) {
        std::vector<double> c;
        for (const auto& b : basis) c.push_back(std::inner_product(p.begin(), p.end(), b.begin(), 0.0));
        coords.push_back(std::move(c));
    }
    return coords;
}

} // namespace

void Dataset::add(std::span<const double> xs, std::size_t label) {
    if (xs.size() != d) throw DataError("example has dimension " + std::to_string(xs.size()) + ", expected " + std::to_string(d));
    features.insert(features.end(), xs.begin(), xs.end());
    labels.push_back(label);
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(K, 0);
    for (auto l : labels) ++counts.at(l);
    return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.d = d;
    out.K = K;
    out.partition = partition;
    out.bounds = bounds;
    for (auto i : indices) out.add(x(i), y(i));
    return out;
}

void Dataset::validate() const {
    if (d == 0 || K == 0) throw DataError("dataset needs positive d and K");
    if (features.size() != labels.size() * d) throw DataError("feature buffer does not match example count");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= K) throw DataError("example " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                                            " outside [0, " + std::to_string(K) + ")");
    if (!std::all_of(features.begin(), features.end(), [](double v) { return std::isfinite(v); }))
        throw DataError("dataset has non-finite features");
    if (partition && partition->num_classes() != K) throw DataError("partition does not cover the K classes");
    if (bounds && (bounds->lo.size() != d || bounds->hi.size() != d)) throw DataError("feature bounds have the wrong length");
}

Dataset parse_csv(const std::string& text, std::optional<std::size_t> num_classes) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    Dataset ds;
    bool header = false;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = split_commas(line);
        if (!header) {
            if (cells.size() < 2 || cells.back() != "label") throw ParseError("header must be f0,...,f{d-1},label", lineno);
            for (std::size_t k = 0; k + 1 < cells.size(); ++k)
                if (cells[k] != "f" + std::to_string(k)) throw ParseError("header column " + std::to_string(k) + " must be f" + std::to_string(k), lineno);
            ds.d = cells.size() - 1;
            header = true;
            continue;
        }
        if (cells.size() != ds.d + 1)
            throw ParseError("row has " + std::to_string(cells.size()) + " columns, expected " + std::to_string(ds.d + 1), lineno);
        std::vector<double> xs(ds.d);
        for (std::size_t k = 0; k < ds.d; ++k) {
            const auto& c = cells[k];
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), xs[k]);
            if (ec != std::errc() || ptr != c.data() + c.size() || c.empty() || !std::isfinite(xs[k]))
                throw ParseError("feature f" + std::to_string(k) + " is not a finite number: '" + c + "'", lineno);
        }
        const auto& lc = cells.back();
        std::size_t label = 0;
        auto [ptr, ec] = std::from_chars(lc.data(), lc.data() + lc.size(), label);
        if (ec != std::errc() || ptr != lc.data() + lc.size() || lc.empty())
            throw ParseError("label is not a non-negative integer: '" + lc + "'", lineno);
        if (num_classes && label >= *num_classes)
            throw ParseError("label " + std::to_string(label) + " outside [0, " + std::to_string(*num_classes) + ")", lineno);
        max_label = std::max(max_label, label);
        ds.features.insert(ds.features.end(), xs.begin(), xs.end());
        ds.labels.push_back(label);
    }
    if (!header) throw ParseError("missing header", lineno);
    if (ds.labels.empty()) throw DataError("dataset has no examples");
    ds.K = num_classes ? *num_classes : max_label + 1;
    return ds;
}

Dataset load_csv(const std::string& path, std::optional<std::size_t> num_classes) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), num_classes);
}

std::string to_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t k = 0; k < ds.d; ++k) out += "f" + std::to_string(k) + ",";
    out += "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.x(i)) out += utility::format_double(v) + ",";
        out += std::to_string(ds.y(i)) + "\n";
    }
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << to_csv(ds);
}

std::vector<std::vector<double>> class_means(const SynthParams& p) {
    if (p.K < 2) throw ConfigError("generator needs K >= 2");
    if (p.d < 2) throw ConfigError("generator needs d >= 2");
    if (p.partition.num_classes() != p.K) throw ConfigError("partition must assign all K classes");
    if (!(p.intra_sep >= 0.0) || !(p.inter_sep >= 0.0)) throw ConfigError("separations must be non-negative");

    const auto groups = p.partition.group_ids();
    const std::size_t G = groups.size();
    std::size_t largest = 0;
    for (int g : groups) largest = std::max(largest, p.partition.members(g).size());

    std::vector<std::vector<double>> means(p.K, std::vector<double>(p.d, 0.0));
    if (p.d + 1 >= p.K && p.intra_sep <= p.inter_sep) {
        // Orthogonal construction in R^{G+K}: a e_group + b e_class, then reduced to its span.
        const double b = p.intra_sep / std::sqrt(2.0);
        const double a = std::sqrt((p.inter_sep * p.inter_sep - p.intra_sep * p.intra_sep) / 2.0);
        std::vector<std::vector<double>> raw(p.K, std::vector<double>(G + p.K, 0.0));
        for (std::size_t y = 0; y < p.K; ++y) {
            const auto gi = std::find(groups.begin(), groups.end(), p.partition.group(y)) - groups.begin();
            raw[y][static_cast<std::size_t>(gi)] = a;
            raw[y][G + y] = b;
        }
        const auto coords = embed_minimal(std::move(raw));
        for (std::size_t y = 0; y < p.K; ++y)
            for (std::size_t k = 0; k < coords[y].size(); ++k) means[y][k] = coords[y][k];
        return means;
    }
    if ((G - 1) + (largest - 1) > p.d)
        throw ConfigError("infeasible geometry: " + std::to_string(G) + " groups with up to " + std::to_string(largest) +
                          " classes need d >= " + std::to_string((G - 1) + (largest - 1)));
    const auto centroids = regular_simplex(G, p.inter_sep);
    for (std::size_t gi = 0; gi < G; ++gi) {
        const auto members = p.partition.members(groups[gi]);
        const auto offsets = regular_simplex(members.size(), p.intra_sep);
        for (std::size_t m = 0; m < members.size(); ++m) {
            auto& mu = means[members[m]];
            for (std::size_t k = 0; k < centroids[gi].size(); ++k) mu[k] = centroids[gi][k];
            for (std::size_t k = 0; k < offsets[m].size(); ++k) mu[G - 1 + k] += offsets[m][k];
        }
    }
    return means;
}

Dataset synth_gaussian_groups(const SynthParams& p) {
    if (!(p.noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
    if (p.n_per_class == 0) throw ConfigError("n_per_class must be positive");
    const auto means = class_means(p);
    Rng rng(p.seed);
    Dataset ds;
    ds.d = p.d;
    ds.K = p.K;
    ds.partition = p.partition;
    std::vector<double> xs(p.d);
    for (std::size_t y = 0; y < p.K; ++y)
        for (std::size_t n = 0; n < p.n_per_class; ++n) {
            for (std::size_t k = 0; k < p.d; ++k) xs[k] = means[y][k] + p.noise_sd * rng.normal();
            ds.add(xs, y);
        }
    return ds;
}

Split train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
    std::vector<std::vector<std::size_t>> by_class(ds.K);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.y(i)].push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& idx : by_class) {
        rng.shuffle(idx.begin(), idx.end());
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (batch_size == 0) throw InputError("batch size must be positive");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(shuffle_seed);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < n; b += batch_size)
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                             perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
    return batches;
}

} // namespace stratrob::data
