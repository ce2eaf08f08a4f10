#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratrob/rng.hpp"

namespace stratrob::utility {

/// Ordered list of target classes for one source class.
using TargetSet = std::vector<std::size_t>;

/// K x K opponent payoff over (true label, predicted label), entries in [0, 1]
/// with a zero diagonal.
class UtilityMatrix {
public:
    /// values are row-major, K * K of them.
    UtilityMatrix(std::size_t K, std::vector<double> values);

    static UtilityMatrix zeros(std::size_t K);
    static UtilityMatrix from_rows(const std::vector<std::vector<double>>& rows);
    /// 0-1 matrix with ones at the given targets of each row.
    static UtilityMatrix from_targets(std::size_t K, const std::vector<TargetSet>& targets);

    std::size_t num_classes() const { return K_; }
    double operator()(std::size_t y, std::size_t y2) const { return values_[y * K_ + y2]; }
    std::span<const double> row(std::size_t y) const { return {values_.data() + y * K_, K_}; }
    const std::vector<double>& values() const { return values_; }

    bool is_zero_one() const;
    bool is_zero() const;

    bool operator==(const UtilityMatrix&) const = default;

private:
    std::size_t K_;
    std::vector<double> values_;
};

/// Total assignment of classes to semantic groups.
class SemanticPartition {
public:
    explicit SemanticPartition(std::vector<int> group_of);

    std::size_t num_classes() const { return group_of_.size(); }
    int group(std::size_t y) const { return group_of_.at(y); }
    bool same_group(std::size_t a, std::size_t b) const { return group(a) == group(b); }
    const std::vector<int>& group_of() const { return group_of_; }
    /// Distinct group ids in order of first appearance.
    std::vector<int> group_ids() const;
    std::vector<std::size_t> members(int group) const;

    bool operator==(const SemanticPartition&) const = default;

private:
    std::vector<int> group_of_;
};

UtilityMatrix adversarial_utility(std::size_t K);
UtilityMatrix k_hot_random(std::size_t K, std::size_t k, std::uint64_t seed);
UtilityMatrix semantic_representative(const SemanticPartition& partition);
UtilityMatrix anti_semantic_representative(const SemanticPartition& partition);
/// ordering lists classes from least to most preferred; entry (y, y') is 1
/// iff y' ranks strictly above y.
UtilityMatrix preference_utility(std::span<const std::size_t> ordering);

/// True iff a <= b elementwise.
bool dominates(const UtilityMatrix& a, const UtilityMatrix& b);

/// Strictly positive entries of row y in decreasing utility, lower index first on ties.
TargetSet targets_of(const UtilityMatrix& u, std::size_t y);

/// 0-1 matrix with the support of u.
UtilityMatrix support(const UtilityMatrix& u);

enum class SetKind { Singleton, Explicit, AllKHot, Semantic, AntiSemantic, Preference };

/// A family of utility matrices the learner defends against.
class UncertaintySet {
public:
    static UncertaintySet singleton(UtilityMatrix u);
    static UncertaintySet explicit_set(std::vector<UtilityMatrix> members);
    static UncertaintySet all_k_hot(std::size_t K, std::size_t k);
    static UncertaintySet semantic(SemanticPartition partition);
    static UncertaintySet anti_semantic(SemanticPartition partition);
    static UncertaintySet preference(std::vector<std::vector<std::size_t>> orderings);

    SetKind kind() const { return kind_; }
    std::size_t num_classes() const { return K_; }
    std::size_t k() const { return k_; }
    const std::vector<UtilityMatrix>& members() const { return members_; }
    const std::optional<SemanticPartition>& partition() const { return partition_; }
    const std::vector<std::vector<std::size_t>>& orderings() const { return orderings_; }

    /// True when the worst case over the set decomposes into independent per-row choices.
    bool row_factorizable() const;

    std::string describe() const;

private:
    UncertaintySet(SetKind kind, std::size_t K) : kind_(kind), K_(K) {}

    SetKind kind_;
    std::size_t K_;
    std::size_t k_ = 0;
    std::vector<UtilityMatrix> members_; // singleton, explicit, preference (one per ordering)
    std::optional<SemanticPartition> partition_;
    std::vector<std::vector<std::size_t>> orderings_;
};

/// Enumeration bounds for all_k_hot candidate rows.
inline constexpr std::size_t kMaxEnumClasses = 12;
inline constexpr std::uint64_t kMaxRowCandidates = 10000;

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Distinct target sets that row y can take across the set, in canonical order.
/// Throws CapacityError when all_k_hot enumeration exceeds the guards.
std::vector<TargetSet> row_candidates(const UncertaintySet& set, std::size_t y);

/// Elementwise-maximal member when it dominates the whole set, so that training
/// against it covers every member.
std::optional<UtilityMatrix> worst_case_representative(const UncertaintySet& set);

/// Uniform draw from the set. Semantic and anti-semantic sets are the 0-1
/// matrices below their representative; each support entry is kept with
/// probability 1/2.
UtilityMatrix sample_member(const UncertaintySet& set, Rng& rng);

/// "K=<int>" header followed by K rows of K decimals.
std::string to_text(const UtilityMatrix& u);
UtilityMatrix utility_from_text(const std::string& text);
void save(const UtilityMatrix& u, const std::string& path);
UtilityMatrix load_utility(const std::string& path);

/// Lines "class_index,group_id".
std::string to_text(const SemanticPartition& p);
SemanticPartition partition_from_text(const std::string& text);
void save(const SemanticPartition& p, const std::string& path);
SemanticPartition load_partition(const std::string& path);

/// Shortest decimal that parses back to exactly the same double.
std::string format_double(double v);

} // namespace stratrob::utility
