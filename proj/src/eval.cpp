#include "stratrob/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stratrob/error.hpp"
#include "stratrob/parallel.hpp"
#include "stratrob/rng.hpp"

namespace stratrob::eval {

namespace {

constexpr std::uint64_t kAdversarialKey = 0x5a17ULL;
constexpr std::uint64_t kMaxSampleAttempts = 400'000;

std::uint64_t mask_of(const TargetSet& targets) {
    std::uint64_t m = 0;
    for (auto t : targets) {
        if (t >= 64) throw InputError("target sets are limited to 64 classes");
        m |= std::uint64_t{1} << t;
    }
    return m;
}

bool same_set(TargetSet a, TargetSet b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

void check_K(const UtilityMatrix& u, std::size_t K) {
    if (u.num_classes() != K) throw InputError("utility K does not match the data");
}

double ratio(std::size_t num, std::size_t den) { return static_cast<double>(num) / static_cast<double>(den); }

// Per-example correctness for each candidate row of the example's class.
std::vector<std::vector<std::size_t>> row_counts(AttackCache& cache, const std::vector<std::vector<TargetSet>>& cands) {
    const auto& data = cache.data();
    std::vector<std::vector<char>> hit(data.size());
    parallel_for(data.size(), cache.settings().threads, [&](std::size_t i) {
        const std::size_t y = data.y(i);
        for (const auto& T : cands[y]) hit[i].push_back(cache.strategic_prediction(i, T) == y ? 1 : 0);
    });
    std::vector<std::vector<std::size_t>> counts(data.K);
    for (std::size_t y = 0; y < data.K; ++y) counts[y].assign(cands[y].size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t c = 0; c < hit[i].size(); ++c) counts[data.y(i)][c] += static_cast<std::size_t>(hit[i][c]);
    return counts;
}

std::size_t first_min(const std::vector<std::size_t>& v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

WorstCase compose(const AttackCache& cache, const std::vector<std::vector<TargetSet>>& cands,
                  const std::vector<std::vector<std::size_t>>& counts, const std::vector<std::size_t>& choice) {
    const std::size_t K = cache.data().K;
    WorstCase w;
    std::vector<TargetSet> rows(K);
    for (std::size_t y = 0; y < K; ++y) {
        if (cands[y].empty()) continue;
        rows[y] = cands[y][choice[y]];
        w.correct += counts[y][choice[y]];
    }
    w.accuracy = ratio(w.correct, cache.data().size());
    w.utility = UtilityMatrix::from_targets(K, rows);
    return w;
}

std::size_t members_correct(AttackCache& cache, const UtilityMatrix& m) {
    return correct_under(cache, AttackRequest::strategic(m));
}

} // namespace

AttackCache::AttackCache(const nn::DenseNet& net, const data::Dataset& data, EvalSettings settings)
    : net_(net), data_(data), settings_(std::move(settings)) {
    data_.validate();
    if (data_.empty()) throw InputError("evaluation data is empty");
    if (net_.input_dim() != data_.d || net_.num_classes() != data_.K)
        throw InputError("network shape does not match the data");
    settings_.spec.validate();
    if (settings_.backend == Backend::Oracle && settings_.grid_points < 2)
        throw InputError("oracle grid needs at least 2 points per dimension");
    clean_.resize(data_.size());
    slots_.resize(data_.size());
    parallel_for(data_.size(), settings_.threads, [&](std::size_t i) { clean_[i] = nn::predict(net_, data_.x(i)); });
}

attack::AttackSpec AttackCache::spec_for(std::size_t i, std::uint64_t key) const {
    return settings_.spec.with_seed(derive_seed(settings_.spec.seed, {i, key}));
}

const attack::OracleGrid& AttackCache::grid(std::size_t i) {
    auto& slot = slots_[i];
    if (!slot.grid) slot.grid.emplace(net_, data_.x(i), settings_.spec, settings_.grid_points);
    return *slot.grid;
}

std::size_t AttackCache::strategic_prediction(std::size_t i, const TargetSet& targets) {
    if (targets.empty()) return clean_[i];
    const std::uint64_t key = mask_of(targets);
    auto& slot = slots_[i];
    if (auto it = slot.strategic.find(key); it != slot.strategic.end()) return it->second;
    std::size_t pred;
    if (settings_.backend == Backend::Oracle)
        pred = grid(i).best(attack::indicator_row(data_.K, targets)).predicted;
    else
        pred = attack::strategic_response(net_, data_.x(i), data_.y(i), targets, spec_for(i, key)).predicted;
    ++slot.runs;
    slot.strategic.emplace(key, pred);
    return pred;
}

std::size_t AttackCache::adversarial_prediction(std::size_t i) {
    auto& slot = slots_[i];
    if (slot.adversarial) return *slot.adversarial;
    std::size_t pred;
    if (settings_.backend == Backend::Oracle) {
        nn::Vector row(data_.K, 1.0);
        row[data_.y(i)] = 0.0;
        pred = grid(i).best(row).predicted;
    } else {
        pred = attack::pgd_untargeted(net_, data_.x(i), data_.y(i), spec_for(i, kAdversarialKey)).predicted;
    }
    ++slot.runs;
    slot.adversarial = pred;
    return pred;
}

std::size_t AttackCache::sequential_prediction(std::size_t i, std::span<const double> row) {
    if (row.size() != data_.K) throw InputError("utility row has the wrong length");
    return attack::sequential_attack_with(row, data_.d, clean_[i],
                                          [&](std::size_t t) {
                                              attack::AttackOutcome o;
                                              o.predicted = strategic_prediction(i, {t});
                                              return o;
                                          })
        .predicted;
}

std::size_t AttackCache::attacks_run() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.runs;
    return n;
}

double accuracy_clean(const nn::DenseNet& net, const data::Dataset& data) {
    if (data.empty()) throw InputError("evaluation data is empty");
    if (net.input_dim() != data.d) throw InputError("network input dimension does not match the data");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (nn::predict(net, data.x(i)) == data.y(i)) ++correct;
    return ratio(correct, data.size());
}

std::vector<std::size_t> attacked_predictions(AttackCache& cache, const AttackRequest& request) {
    const auto& data = cache.data();
    std::vector<TargetSet> targets;
    if (request.kind == AttackKind::Strategic || request.kind == AttackKind::Sequential) {
        if (!request.u) throw InputError("attack request needs a utility matrix");
        check_K(*request.u, data.K);
        for (std::size_t y = 0; y < data.K; ++y) targets.push_back(utility::targets_of(*request.u, y));
    }
    std::vector<std::size_t> preds(data.size());
    parallel_for(data.size(), cache.settings().threads, [&](std::size_t i) {
        const std::size_t y = data.y(i);
        switch (request.kind) {
        case AttackKind::None: preds[i] = cache.clean_prediction(i); break;
        case AttackKind::Adversarial: preds[i] = cache.adversarial_prediction(i); break;
        case AttackKind::Strategic: preds[i] = cache.strategic_prediction(i, targets[y]); break;
        case AttackKind::Sequential: preds[i] = cache.sequential_prediction(i, request.u->row(y)); break;
        }
    });
    return preds;
}

std::size_t correct_under(AttackCache& cache, const AttackRequest& request) {
    const auto preds = attacked_predictions(cache, request);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == cache.data().y(i)) ++correct;
    return correct;
}

double accuracy_under(AttackCache& cache, const AttackRequest& request) {
    return ratio(correct_under(cache, request), cache.data().size());
}

double accuracy_under(const nn::DenseNet& net, const data::Dataset& data, const AttackRequest& request,
                      const EvalSettings& settings) {
    AttackCache cache(net, data, settings);
    return accuracy_under(cache, request);
}

double TargetAccuracyTable::operator()(std::size_t y, std::size_t t) const {
    return class_counts[y] ? ratio(correct[y * K + t], class_counts[y]) : 0.0;
}

std::size_t TargetAccuracyTable::total() const {
    return std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
}

double TargetAccuracyTable::one_hot_accuracy(std::span<const std::size_t> targets) const {
    if (targets.size() != K) throw InputError("1-hot opponent needs one target per class");
    std::size_t c = 0;
    for (std::size_t y = 0; y < K; ++y) {
        if (targets[y] >= K || targets[y] == y) throw InputError("1-hot target must be another class");
        c += correct[y * K + targets[y]];
    }
    return ratio(c, total());
}

TargetAccuracyTable target_accuracy_table(AttackCache& cache) {
    const auto& data = cache.data();
    const std::size_t K = data.K;
    std::vector<std::vector<char>> hit(data.size(), std::vector<char>(K, 0));
    parallel_for(data.size(), cache.settings().threads, [&](std::size_t i) {
        const std::size_t y = data.y(i);
        for (std::size_t t = 0; t < K; ++t) {
            const std::size_t pred = t == y ? cache.clean_prediction(i) : cache.strategic_prediction(i, {t});
            hit[i][t] = pred == y ? 1 : 0;
        }
    });
    TargetAccuracyTable table;
    table.K = K;
    table.correct.assign(K * K, 0);
    table.class_counts = data.class_counts();
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t t = 0; t < K; ++t) table.correct[data.y(i) * K + t] += static_cast<std::size_t>(hit[i][t]);
    return table;
}

WorstCase worst_case_accuracy(AttackCache& cache, const UncertaintySet& set) {
    const std::size_t K = cache.data().K;
    if (set.num_classes() != K) throw InputError("uncertainty set K does not match the data");
    if (set.row_factorizable()) {
        std::vector<std::vector<TargetSet>> cands(K);
        for (std::size_t y = 0; y < K; ++y) cands[y] = utility::row_candidates(set, y);
        const auto counts = row_counts(cache, cands);
        std::vector<std::size_t> choice(K, 0);
        for (std::size_t y = 0; y < K; ++y)
            if (!counts[y].empty()) choice[y] = first_min(counts[y]);
        WorstCase w = compose(cache, cands, counts, choice);
        if (set.kind() == utility::SetKind::Singleton) w.utility = set.members().front();
        return w;
    }
    std::optional<WorstCase> best;
    for (const auto& m : set.members()) {
        const std::size_t c = members_correct(cache, m);
        if (!best || c < best->correct) best = WorstCase{ratio(c, cache.data().size()), c, m};
    }
    return *best;
}

WorstCase worst_case_excluding(AttackCache& cache, const UncertaintySet& set, const UtilityMatrix& excluded) {
    const std::size_t K = cache.data().K;
    if (set.num_classes() != K) throw InputError("uncertainty set K does not match the data");
    check_K(excluded, K);
    if (!set.row_factorizable()) {
        std::optional<WorstCase> best;
        for (const auto& m : set.members()) {
            if (m == excluded) continue;
            const std::size_t c = members_correct(cache, m);
            if (!best || c < best->correct) best = WorstCase{ratio(c, cache.data().size()), c, m};
        }
        if (!best) throw DomainError("no member remains after the exclusion");
        return *best;
    }
    std::vector<std::vector<TargetSet>> cands(K);
    std::vector<std::optional<std::size_t>> ex_index(K);
    bool member = true;
    for (std::size_t y = 0; y < K; ++y) {
        cands[y] = utility::row_candidates(set, y);
        const TargetSet ex = utility::targets_of(excluded, y);
        for (std::size_t c = 0; c < cands[y].size(); ++c)
            if (same_set(cands[y][c], ex)) ex_index[y] = c;
        if (!ex_index[y]) member = false;
    }
    if (!member) return worst_case_accuracy(cache, set);

    const auto counts = row_counts(cache, cands);
    std::vector<std::size_t> choice(K, 0);
    bool differs = false;
    for (std::size_t y = 0; y < K; ++y) {
        choice[y] = first_min(counts[y]);
        if (choice[y] != *ex_index[y]) differs = true;
    }
    if (!differs) {
        // Every row picked the excluded row: swap the cheapest single row.
        std::optional<std::size_t> row;
        std::size_t alt = 0, gap = 0;
        for (std::size_t y = 0; y < K; ++y) {
            for (std::size_t c = 0; c < cands[y].size(); ++c) {
                if (c == *ex_index[y]) continue;
                const std::size_t g = counts[y][c] - counts[y][*ex_index[y]];
                if (!row || g < gap) {
                    row = y;
                    alt = c;
                    gap = g;
                }
            }
        }
        if (!row) throw DomainError("no member remains after the exclusion");
        choice[*row] = alt;
    }
    return compose(cache, cands, counts, choice);
}

WorstCase worst_case_accuracy(const nn::DenseNet& net, const data::Dataset& data, const UncertaintySet& set,
                              const EvalSettings& settings) {
    AttackCache cache(net, data, settings);
    return worst_case_accuracy(cache, set);
}

double deflection_rate(double strat_fstr, double strat_fadv, double clean_fcln) {
    const double den = clean_fcln - strat_fadv;
    if (!(den > 0.0)) throw DomainError("deflection rate is undefined when clean accuracy does not exceed the adversarial model's");
    return (strat_fstr - strat_fadv) / den;
}

std::vector<std::size_t> attack_distribution(AttackCache& cache, const AttackRequest& request) {
    const std::size_t K = cache.data().K;
    const auto preds = attacked_predictions(cache, request);
    std::vector<std::size_t> counts(K * K, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) ++counts[cache.data().y(i) * K + preds[i]];
    return counts;
}

std::vector<OneHot> enumerate_one_hots(const TargetAccuracyTable& table) {
    const std::size_t K = table.K;
    if (K < 2) throw InputError("1-hot opponents need K >= 2");
    std::uint64_t n = 1;
    for (std::size_t y = 0; y < K; ++y) {
        n *= K - 1;
        if (n > kMaxLandscapeEnum) throw CapacityError("too many 1-hot opponents to enumerate");
    }
    std::vector<OneHot> out;
    out.reserve(static_cast<std::size_t>(n));
    std::vector<std::size_t> t(K);
    for (std::size_t y = 0; y < K; ++y) t[y] = y == 0 ? 1 : 0;
    while (true) {
        out.push_back({t, table.one_hot_accuracy(t)});
        // Odometer over targets, last class fastest, skipping t[y] == y.
        std::size_t y = K;
        while (y > 0) {
            --y;
            do ++t[y];
            while (t[y] == y);
            if (t[y] < K) break;
            t[y] = y == 0 ? 1 : 0;
            if (y == 0) return out;
        }
        for (std::size_t z = y + 1; z < K; ++z) t[z] = z == 0 ? 1 : 0;
    }
}

Landscape one_hot_landscape(const TargetAccuracyTable& table, std::size_t bins, std::size_t per_bin,
                            std::uint64_t seed) {
    if (bins == 0 || per_bin == 0) throw InputError("bins and per_bin must be positive");
    const std::size_t K = table.K;
    if (K < 2) throw InputError("1-hot opponents need K >= 2");

    Landscape land;
    land.easiest.targets.resize(K);
    land.hardest.targets.resize(K);
    for (std::size_t y = 0; y < K; ++y) {
        std::optional<std::size_t> lo, hi;
        for (std::size_t t = 0; t < K; ++t) {
            if (t == y) continue;
            const auto c = table.correct[y * K + t];
            if (!lo || c < table.correct[y * K + *lo]) lo = t;
            if (!hi || c > table.correct[y * K + *hi]) hi = t;
        }
        land.hardest.targets[y] = *lo;
        land.easiest.targets[y] = *hi;
    }
    land.hardest.accuracy = table.one_hot_accuracy(land.hardest.targets);
    land.easiest.accuracy = table.one_hot_accuracy(land.easiest.targets);

    const double lo = land.hardest.accuracy, hi = land.easiest.accuracy;
    const double width = (hi - lo) / static_cast<double>(bins);
    land.bins.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        land.bins[b].lo = lo + width * static_cast<double>(b);
        land.bins[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    auto bin_of = [&](double a) -> std::size_t {
        if (!(width > 0.0)) return 0;
        const auto b = static_cast<std::size_t>(std::max(0.0, std::floor((a - lo) / width)));
        return std::min(b, bins - 1);
    };

    Rng rng(seed);
    std::uint64_t space = 1;
    bool small = true;
    for (std::size_t y = 0; y < K && small; ++y) {
        space *= K - 1;
        small = space <= kMaxLandscapeEnum;
    }
    if (small) {
        land.exhaustive = true;
        const auto all = enumerate_one_hots(table);
        std::vector<std::vector<std::size_t>> members(bins);
        for (std::size_t j = 0; j < all.size(); ++j) members[bin_of(all[j].accuracy)].push_back(j);
        for (std::size_t b = 0; b < bins; ++b) {
            auto& m = members[b];
            land.bins[b].count = m.size();
            const std::size_t take = std::min(per_bin, m.size());
            for (std::size_t j = 0; j < take; ++j) {
                std::swap(m[j], m[j + rng.uniform_int(m.size() - j)]);
                land.bins[b].samples.push_back(all[m[j]]);
            }
        }
        return land;
    }
    std::size_t full = 0;
    std::vector<std::size_t> t(K);
    for (std::uint64_t a = 0; a < kMaxSampleAttempts && full < bins; ++a) {
        for (std::size_t y = 0; y < K; ++y) {
            const std::size_t r = rng.uniform_int(K - 1);
            t[y] = r < y ? r : r + 1;
        }
        const double acc = table.one_hot_accuracy(t);
        auto& bin = land.bins[bin_of(acc)];
        ++bin.count;
        if (bin.samples.size() < per_bin) {
            bin.samples.push_back({t, acc});
            if (bin.samples.size() == per_bin) ++full;
        }
    }
    return land;
}

std::size_t semantic_pair_count(const UtilityMatrix& u, const utility::SemanticPartition& partition) {
    const std::size_t K = u.num_classes();
    if (partition.num_classes() != K) throw InputError("partition does not match the utility");
    std::size_t count = 0;
    for (std::size_t y = 0; y < K; ++y) {
        std::optional<std::size_t> target;
        for (std::size_t t = 0; t < K; ++t) {
            const double v = u(y, t);
            if (v == 0.0) continue;
            if (v != 1.0 || target) throw InputError("utility is not 1-hot");
            target = t;
        }
        if (!target) throw InputError("utility is not 1-hot");
        if (partition.same_group(y, *target)) ++count;
    }
    return count;
}

double pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw InputError("series lengths differ");
    if (xs.size() < 2) throw InputError("correlation needs at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation is undefined for a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace stratrob::eval
