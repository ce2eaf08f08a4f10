#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratrob/attack.hpp"
#include "stratrob/data.hpp"
#include "stratrob/nn.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::eval {

using utility::TargetSet;
using utility::UncertaintySet;
using utility::UtilityMatrix;

enum class Backend { Pgd, Oracle };

struct EvalSettings {
    attack::AttackSpec spec = attack::AttackSpec::paper_eval();
    Backend backend = Backend::Pgd;
    std::size_t grid_points = 21; // per dimension, oracle only
    int threads = 1;
};

/// Per-example attack outcomes, computed on first use and reused by every
/// metric so that composed and direct accuracies agree exactly.
/// Distinct examples may be filled concurrently; one example is never shared.
class AttackCache {
public:
    AttackCache(const nn::DenseNet& net, const data::Dataset& data, EvalSettings settings);

    const nn::DenseNet& net() const { return net_; }
    const data::Dataset& data() const { return data_; }
    const EvalSettings& settings() const { return settings_; }

    std::size_t clean_prediction(std::size_t i) const { return clean_[i]; }

    /// Prediction after the strategic response to T; an empty T leaves x unattacked.
    std::size_t strategic_prediction(std::size_t i, const TargetSet& targets);
    /// Prediction after an untargeted (utility u^adv) attack.
    std::size_t adversarial_prediction(std::size_t i);
    /// Prediction after the sequential procedure on a [0,1] row.
    std::size_t sequential_prediction(std::size_t i, std::span<const double> row);

    std::size_t attacks_run() const;

private:
    struct Slot {
        std::map<std::uint64_t, std::size_t> strategic; // target-set bitmask -> prediction
        std::optional<std::size_t> adversarial;
        std::optional<attack::OracleGrid> grid;
        std::size_t runs = 0;
    };
    attack::AttackSpec spec_for(std::size_t i, std::uint64_t key) const;
    const attack::OracleGrid& grid(std::size_t i);

    const nn::DenseNet& net_;
    const data::Dataset& data_;
    EvalSettings settings_;
    std::vector<std::size_t> clean_;
    std::vector<Slot> slots_;
};

enum class AttackKind { None, Adversarial, Strategic, Sequential };

struct AttackRequest {
    AttackKind kind = AttackKind::None;
    std::optional<UtilityMatrix> u;

    static AttackRequest none() { return {}; }
    static AttackRequest adversarial() { return {AttackKind::Adversarial, std::nullopt}; }
    static AttackRequest strategic(UtilityMatrix u) { return {AttackKind::Strategic, std::move(u)}; }
    static AttackRequest sequential(UtilityMatrix u) { return {AttackKind::Sequential, std::move(u)}; }
};

double accuracy_clean(const nn::DenseNet& net, const data::Dataset& data);

/// Post-attack prediction of every example.
std::vector<std::size_t> attacked_predictions(AttackCache& cache, const AttackRequest& request);

std::size_t correct_under(AttackCache& cache, const AttackRequest& request);
double accuracy_under(AttackCache& cache, const AttackRequest& request);
double accuracy_under(const nn::DenseNet& net, const data::Dataset& data, const AttackRequest& request,
                      const EvalSettings& settings);

/// Entry (y, t): accuracy on class-y examples attacked toward t; (y, y) is clean accuracy.
/// Counts are kept so that compositions are exact.
struct TargetAccuracyTable {
    std::size_t K = 0;
    std::vector<std::size_t> correct; // K * K
    std::vector<std::size_t> class_counts;

    double operator()(std::size_t y, std::size_t t) const;
    std::size_t total() const;
    /// Accuracy of the 1-hot opponent sending class y to targets[y].
    double one_hot_accuracy(std::span<const std::size_t> targets) const;
};

TargetAccuracyTable target_accuracy_table(AttackCache& cache);

struct WorstCase {
    double accuracy = 0.0;
    std::size_t correct = 0;
    UtilityMatrix utility = UtilityMatrix::zeros(1);
};

/// Minimum accuracy over the set: per-row choices for row-factorizable sets,
/// full enumeration over members otherwise. Ties keep the first candidate.
WorstCase worst_case_accuracy(AttackCache& cache, const UncertaintySet& set);

/// Worst case over the set with the member `excluded` removed. Throws
/// DomainError when nothing remains.
WorstCase worst_case_excluding(AttackCache& cache, const UncertaintySet& set, const UtilityMatrix& excluded);

WorstCase worst_case_accuracy(const nn::DenseNet& net, const data::Dataset& data, const UncertaintySet& set,
                              const EvalSettings& settings);

/// (strat_fstr - strat_fadv) / (clean_fcln - strat_fadv).
double deflection_rate(double strat_fstr, double strat_fadv, double clean_fcln);

/// K x K counts of (true label, post-attack prediction), row-major.
std::vector<std::size_t> attack_distribution(AttackCache& cache, const AttackRequest& request);

struct OneHot {
    std::vector<std::size_t> targets;
    double accuracy = 0.0;
};

struct LandscapeBin {
    double lo = 0.0;
    double hi = 0.0;
    std::uint64_t count = 0; // opponents enumerated (or sampled) into this bin
    std::vector<OneHot> samples;
};

struct Landscape {
    OneHot easiest;
    OneHot hardest;
    bool exhaustive = false;
    std::vector<LandscapeBin> bins;
};

/// Largest number of 1-hot opponents enumerated outright.
inline constexpr std::uint64_t kMaxLandscapeEnum = 2'000'000;

/// Every 1-hot opponent in lexicographic order of its target vector.
std::vector<OneHot> enumerate_one_hots(const TargetAccuracyTable& table);

/// Equal-width bins over [hardest, easiest]; up to per_bin opponents drawn
/// uniformly from each bin. Enumerates when (K-1)^K is small, otherwise
/// rejection-samples uniform 1-hots.
Landscape one_hot_landscape(const TargetAccuracyTable& table, std::size_t bins, std::size_t per_bin,
                            std::uint64_t seed);

/// Number of classes whose single target lies in the same group.
std::size_t semantic_pair_count(const UtilityMatrix& u, const utility::SemanticPartition& partition);

double pearson_correlation(std::span<const double> xs, std::span<const double> ys);

struct EvalReport {
    double clean_acc = 0.0;
    std::optional<double> adv_acc;
    std::map<std::string, double> strategic_accs;
    std::optional<double> worst_case_acc;
    std::optional<UtilityMatrix> worst_case_utility;
    std::optional<double> deflection;
    std::vector<std::size_t> attack_distribution;
    std::size_t K = 0;
};

} // namespace stratrob::eval
