#include "stratrob/utility.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "stratrob/error.hpp"

namespace stratrob::utility {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, std::size_t line) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError("not a number: '" + tok + "'", line);
    return v;
}

long parse_long(const std::string& tok, std::size_t line) {
    long v = 0;
    const std::string t = trim(tok);
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc() || ptr != end || t.empty()) throw ParseError("not an integer: '" + tok + "'", line);
    return v;
}

void check_ordering(std::span<const std::size_t> ordering) {
    std::vector<bool> seen(ordering.size(), false);
    for (auto c : ordering) {
        if (c >= ordering.size() || seen[c]) throw InputError("ordering is not a permutation of the classes");
        seen[c] = true;
    }
}

std::vector<TargetSet> dedup(std::vector<TargetSet> rows) {
    std::vector<TargetSet> out;
    std::set<TargetSet> seen;
    for (auto& r : rows) {
        TargetSet key = r;
        std::sort(key.begin(), key.end());
        if (seen.insert(key).second) out.push_back(std::move(r));
    }
    return out;
}

void k_subsets(std::size_t K, std::size_t y, std::size_t k, std::vector<TargetSet>& out) {
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < K; ++c)
        if (c != y) pool.push_back(c);
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t n = pool.size();
    while (true) {
        TargetSet s;
        for (auto i : idx) s.push_back(pool[i]);
        out.push_back(std::move(s));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

TargetSet random_k_subset(std::size_t K, std::size_t y, std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < K; ++c)
        if (c != y) pool.push_back(c);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + rng.uniform_int(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    TargetSet s(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(s.begin(), s.end());
    return s;
}

std::optional<UtilityMatrix> dominating_member(const std::vector<UtilityMatrix>& members) {
    if (members.empty()) return std::nullopt;
    const std::size_t K = members.front().num_classes();
    std::vector<double> mx(K * K, 0.0);
    for (const auto& m : members)
        for (std::size_t i = 0; i < K * K; ++i) mx[i] = std::max(mx[i], m.values()[i]);
    const UtilityMatrix top(K, std::move(mx));
    for (const auto& m : members)
        if (m == top) return top;
    return std::nullopt;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

UtilityMatrix::UtilityMatrix(std::size_t K, std::vector<double> values) : K_(K), values_(std::move(values)) {
    if (K == 0) throw InputError("utility matrix needs at least one class");
    if (values_.size() != K * K) throw InputError("utility matrix needs K*K values");
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t t = 0; t < K; ++t) {
            const double v = values_[y * K + t];
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("utility entries must lie in [0, 1]");
            if (y == t && v != 0.0) throw InputError("utility diagonal must be zero");
        }
}

UtilityMatrix UtilityMatrix::zeros(std::size_t K) { return UtilityMatrix(K, std::vector<double>(K * K, 0.0)); }

UtilityMatrix UtilityMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (r.size() != rows.size()) throw InputError("utility rows must have K entries");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return UtilityMatrix(rows.size(), std::move(flat));
}

UtilityMatrix UtilityMatrix::from_targets(std::size_t K, const std::vector<TargetSet>& targets) {
    if (targets.size() != K) throw InputError("need one target set per class");
    std::vector<double> flat(K * K, 0.0);
    for (std::size_t y = 0; y < K; ++y)
        for (auto t : targets[y]) {
            if (t >= K) throw InputError("target out of range");
            flat[y * K + t] = 1.0;
        }
    return UtilityMatrix(K, std::move(flat));
}

bool UtilityMatrix::is_zero_one() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

bool UtilityMatrix::is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

SemanticPartition::SemanticPartition(std::vector<int> group_of) : group_of_(std::move(group_of)) {
    if (group_of_.empty()) throw InputError("partition needs at least one class");
}

std::vector<int> SemanticPartition::group_ids() const {
    std::vector<int> ids;
    for (int g : group_of_)
        if (std::find(ids.begin(), ids.end(), g) == ids.end()) ids.push_back(g);
    return ids;
}

std::vector<std::size_t> SemanticPartition::members(int group) const {
    std::vector<std::size_t> m;
    for (std::size_t y = 0; y < group_of_.size(); ++y)
        if (group_of_[y] == group) m.push_back(y);
    return m;
}

UtilityMatrix adversarial_utility(std::size_t K) {
    if (K < 2) throw InputError("adversarial utility needs K >= 2");
    std::vector<double> v(K * K, 1.0);
    for (std::size_t y = 0; y < K; ++y) v[y * K + y] = 0.0;
    return UtilityMatrix(K, std::move(v));
}

UtilityMatrix k_hot_random(std::size_t K, std::size_t k, std::uint64_t seed) {
    if (K < 2 || k < 1 || k > K - 1) throw InputError("k-hot utility needs 1 <= k <= K-1");
    Rng rng(seed);
    std::vector<TargetSet> rows;
    for (std::size_t y = 0; y < K; ++y) rows.push_back(random_k_subset(K, y, k, rng));
    return UtilityMatrix::from_targets(K, rows);
}

UtilityMatrix semantic_representative(const SemanticPartition& p) {
    const std::size_t K = p.num_classes();
    std::vector<double> v(K * K, 0.0);
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t t = 0; t < K; ++t)
            if (t != y && p.same_group(y, t)) v[y * K + t] = 1.0;
    return UtilityMatrix(K, std::move(v));
}

UtilityMatrix anti_semantic_representative(const SemanticPartition& p) {
    const std::size_t K = p.num_classes();
    std::vector<double> v(K * K, 0.0);
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t t = 0; t < K; ++t)
            if (!p.same_group(y, t)) v[y * K + t] = 1.0;
    return UtilityMatrix(K, std::move(v));
}

UtilityMatrix preference_utility(std::span<const std::size_t> ordering) {
    check_ordering(ordering);
    const std::size_t K = ordering.size();
    std::vector<std::size_t> rank(K);
    for (std::size_t r = 0; r < K; ++r) rank[ordering[r]] = r;
    std::vector<double> v(K * K, 0.0);
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t t = 0; t < K; ++t)
            if (rank[t] > rank[y]) v[y * K + t] = 1.0;
    return UtilityMatrix(K, std::move(v));
}

bool dominates(const UtilityMatrix& a, const UtilityMatrix& b) {
    if (a.num_classes() != b.num_classes()) throw InputError("utility matrices have different K");
    for (std::size_t i = 0; i < a.values().size(); ++i)
        if (a.values()[i] > b.values()[i]) return false;
    return true;
}

TargetSet targets_of(const UtilityMatrix& u, std::size_t y) {
    if (y >= u.num_classes()) throw InputError("class out of range");
    TargetSet t;
    for (std::size_t c = 0; c < u.num_classes(); ++c)
        if (u(y, c) > 0.0) t.push_back(c);
    std::stable_sort(t.begin(), t.end(), [&](std::size_t a, std::size_t b) { return u(y, a) > u(y, b); });
    return t;
}

UtilityMatrix support(const UtilityMatrix& u) {
    std::vector<double> v = u.values();
    for (auto& x : v) x = x > 0.0 ? 1.0 : 0.0;
    return UtilityMatrix(u.num_classes(), std::move(v));
}

UncertaintySet UncertaintySet::singleton(UtilityMatrix u) {
    UncertaintySet s(SetKind::Singleton, u.num_classes());
    s.members_.push_back(std::move(u));
    return s;
}

UncertaintySet UncertaintySet::explicit_set(std::vector<UtilityMatrix> members) {
    if (members.empty()) throw InputError("explicit uncertainty set must be non-empty");
    const std::size_t K = members.front().num_classes();
    for (const auto& m : members)
        if (m.num_classes() != K) throw InputError("explicit set members disagree on K");
    UncertaintySet s(SetKind::Explicit, K);
    s.members_ = std::move(members);
    return s;
}

UncertaintySet UncertaintySet::all_k_hot(std::size_t K, std::size_t k) {
    if (K < 2 || k < 1 || k > K - 1) throw InputError("all_k_hot needs 1 <= k <= K-1");
    UncertaintySet s(SetKind::AllKHot, K);
    s.k_ = k;
    return s;
}

UncertaintySet UncertaintySet::semantic(SemanticPartition partition) {
    UncertaintySet s(SetKind::Semantic, partition.num_classes());
    s.partition_ = std::move(partition);
    return s;
}

UncertaintySet UncertaintySet::anti_semantic(SemanticPartition partition) {
    UncertaintySet s(SetKind::AntiSemantic, partition.num_classes());
    s.partition_ = std::move(partition);
    return s;
}

UncertaintySet UncertaintySet::preference(std::vector<std::vector<std::size_t>> orderings) {
    if (orderings.empty()) throw InputError("preference set needs at least one ordering");
    const std::size_t K = orderings.front().size();
    UncertaintySet s(SetKind::Preference, K);
    for (const auto& o : orderings) {
        if (o.size() != K) throw InputError("orderings disagree on K");
        s.members_.push_back(preference_utility(o));
    }
    s.orderings_ = std::move(orderings);
    return s;
}

bool UncertaintySet::row_factorizable() const {
    switch (kind_) {
    case SetKind::Singleton:
    case SetKind::AllKHot:
    case SetKind::Semantic:
    case SetKind::AntiSemantic:
        return true;
    case SetKind::Explicit:
    case SetKind::Preference:
        return false;
    }
    return false;
}

std::string UncertaintySet::describe() const {
    switch (kind_) {
    case SetKind::Singleton: return "singleton";
    case SetKind::Explicit: return "explicit(" + std::to_string(members_.size()) + ")";
    case SetKind::AllKHot: return "all_k_hot(" + std::to_string(k_) + ")";
    case SetKind::Semantic: return "semantic";
    case SetKind::AntiSemantic: return "anti_semantic";
    case SetKind::Preference: return "preference(" + std::to_string(orderings_.size()) + ")";
    }
    return "?";
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > (std::uint64_t{1} << 52)) return r; // saturates far above any guard
    }
    return r;
}

std::vector<TargetSet> row_candidates(const UncertaintySet& set, std::size_t y) {
    const std::size_t K = set.num_classes();
    if (y >= K) throw InputError("class out of range");
    std::vector<TargetSet> rows;
    switch (set.kind()) {
    case SetKind::Singleton:
    case SetKind::Explicit:
    case SetKind::Preference:
        for (const auto& m : set.members()) rows.push_back(targets_of(m, y));
        break;
    case SetKind::AllKHot: {
        if (K > kMaxEnumClasses || binomial(K - 1, set.k()) > kMaxRowCandidates)
            throw CapacityError("all_k_hot(" + std::to_string(set.k()) + ") with K=" + std::to_string(K) +
                                " exceeds the enumeration guard; sample instead");
        k_subsets(K, y, set.k(), rows);
        break;
    }
    case SetKind::Semantic:
        rows.push_back(targets_of(semantic_representative(*set.partition()), y));
        break;
    case SetKind::AntiSemantic:
        rows.push_back(targets_of(anti_semantic_representative(*set.partition()), y));
        break;
    }
    return dedup(std::move(rows));
}

std::optional<UtilityMatrix> worst_case_representative(const UncertaintySet& set) {
    switch (set.kind()) {
    case SetKind::Singleton:
        return set.members().front();
    case SetKind::Explicit:
    case SetKind::Preference:
        return dominating_member(set.members());
    case SetKind::AllKHot:
        if (set.k() == set.num_classes() - 1) return adversarial_utility(set.num_classes());
        return std::nullopt;
    case SetKind::Semantic:
        return semantic_representative(*set.partition());
    case SetKind::AntiSemantic:
        return anti_semantic_representative(*set.partition());
    }
    return std::nullopt;
}

UtilityMatrix sample_member(const UncertaintySet& set, Rng& rng) {
    const std::size_t K = set.num_classes();
    switch (set.kind()) {
    case SetKind::Singleton:
    case SetKind::Explicit:
    case SetKind::Preference:
        return set.members()[rng.uniform_int(set.members().size())];
    case SetKind::AllKHot: {
        std::vector<TargetSet> rows;
        for (std::size_t y = 0; y < K; ++y) rows.push_back(random_k_subset(K, y, set.k(), rng));
        return UtilityMatrix::from_targets(K, rows);
    }
    case SetKind::Semantic:
    case SetKind::AntiSemantic: {
        const auto rep = *worst_case_representative(set);
        std::vector<double> v = rep.values();
        for (auto& x : v)
            if (x > 0.0 && !rng.bernoulli(0.5)) x = 0.0;
        return UtilityMatrix(K, std::move(v));
    }
    }
    return UtilityMatrix::zeros(K);
}

std::string to_text(const UtilityMatrix& u) {
    std::string out = "K=" + std::to_string(u.num_classes()) + "\n";
    for (std::size_t y = 0; y < u.num_classes(); ++y) {
        for (std::size_t t = 0; t < u.num_classes(); ++t) {
            if (t) out += ' ';
            out += format_double(u(y, t));
        }
        out += '\n';
    }
    return out;
}

UtilityMatrix utility_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> K;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (!K) {
            if (line.rfind("K=", 0) != 0) throw ParseError("expected header 'K=<int>'", lineno);
            const long k = parse_long(line.substr(2), lineno);
            if (k < 1) throw ParseError("K must be positive", lineno);
            K = static_cast<std::size_t>(k);
            continue;
        }
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) row.push_back(parse_double(tok, lineno));
        if (row.size() != *K) throw ParseError("row has " + std::to_string(row.size()) + " entries, expected K", lineno);
        rows.push_back(std::move(row));
    }
    if (!K) throw ParseError("missing 'K=<int>' header", lineno);
    if (rows.size() != *K) throw ParseError("expected " + std::to_string(*K) + " rows", lineno);
    return UtilityMatrix::from_rows(rows);
}

void save(const UtilityMatrix& u, const std::string& path) { write_file(path, to_text(u)); }

UtilityMatrix load_utility(const std::string& path) { return utility_from_text(read_file(path)); }

std::string to_text(const SemanticPartition& p) {
    std::string out;
    for (std::size_t y = 0; y < p.num_classes(); ++y) out += std::to_string(y) + "," + std::to_string(p.group(y)) + "\n";
    return out;
}

SemanticPartition partition_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<long, int> groups;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("expected 'class_index,group_id'", lineno);
        const long c = parse_long(line.substr(0, comma), lineno);
        const long g = parse_long(line.substr(comma + 1), lineno);
        if (c < 0) throw ParseError("negative class index", lineno);
        if (!groups.emplace(c, static_cast<int>(g)).second) throw ParseError("class listed twice", lineno);
    }
    std::vector<int> group_of;
    for (const auto& [c, g] : groups) {
        if (c != static_cast<long>(group_of.size()))
            throw ParseError("class indices must cover 0..K-1; missing " + std::to_string(group_of.size()), lineno);
        group_of.push_back(g);
    }
    if (group_of.empty()) throw ParseError("partition is empty", lineno);
    return SemanticPartition(std::move(group_of));
}

void save(const SemanticPartition& p, const std::string& path) { write_file(path, to_text(p)); }

SemanticPartition load_partition(const std::string& path) { return partition_from_text(read_file(path)); }

} // namespace stratrob::utility
