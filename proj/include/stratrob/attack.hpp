#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratrob/nn.hpp"
#include "stratrob/rng.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::attack {

using nn::Vector;
using utility::TargetSet;

/// Per-feature box for x + delta. Off unless a dataset declares it.
struct FeatureBounds {
    Vector lo;
    Vector hi;

    bool operator==(const FeatureBounds&) const = default;
};

/// L-infinity threat model and PGD schedule.
struct AttackSpec {
    double radius = 8.0 / 255.0;
    int steps = 20;
    double step_size = 0.0039;
    bool random_start = false;
    std::uint64_t seed = 0;
    std::optional<FeatureBounds> bounds;

    void validate() const;

    /// Training preset: r = 8/255, 7 steps of 0.011, random start.
    static AttackSpec paper_train();
    /// Evaluation preset: r = 8/255, 20 steps of 0.0039, no random start.
    static AttackSpec paper_eval();

    /// Accepts "paper-train", "paper-eval", or
    /// "linf:r=<float>,steps=<int>,step=<float>,rand=<0|1>,seed=<int>".
    static AttackSpec parse(const std::string& text);
    std::string to_string() const;

    AttackSpec with_seed(std::uint64_t s) const {
        AttackSpec copy = *this;
        copy.seed = s;
        return copy;
    }
};

struct AttackOutcome {
    Vector delta;
    std::size_t predicted = 0;
    double achieved_utility = 0.0;
    bool success = false;
    Vector objective_trace;
    /// Set when a noisy response swapped in a targeted attack on this class.
    std::optional<std::size_t> redirected_target;
};

/// Elementwise clamp to [-r, r].
Vector project_linf(std::span<const double> delta, double r);

/// Sign-gradient descent on p(y | x + delta). Utility is 1{prediction != y}.
AttackOutcome pgd_untargeted(const nn::DenseNet& net, std::span<const double> x, std::size_t y, const AttackSpec& spec);

/// Sign-gradient ascent on p(target | x + delta). Utility is 1{prediction == target}.
AttackOutcome pgd_targeted(const nn::DenseNet& net, std::span<const double> x, std::size_t target,
                           const AttackSpec& spec);

/// Multi-targeted response: ascent on max_{t in T} p(t | x + delta), the
/// maximizing target re-resolved every step. T must be non-empty and exclude y.
AttackOutcome strategic_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                 const TargetSet& targets, const AttackSpec& spec);

/// Like strategic_response, but the objective subtracts the best non-target probability.
AttackOutcome preference_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                  const TargetSet& targets, const AttackSpec& spec);

/// One targeted attempt on a single class; lets the sequential procedure run
/// over PGD or over the exhaustive oracle.
using TargetedAttacker = std::function<AttackOutcome(std::size_t target)>;

/// Tries the positive-utility targets of `row` in decreasing utility order and
/// keeps the first success; when all fail, keeps the attempt on the top target.
/// `clean_prediction` is reported when the row has no positive entry.
AttackOutcome sequential_attack_with(std::span<const double> row, std::size_t dim, std::size_t clean_prediction,
                                     const TargetedAttacker& attempt);

AttackOutcome sequential_attack(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                const utility::UtilityMatrix& u, const AttackSpec& spec);

/// Ascent on max_t u(y, t) p(t | x + delta). Utility is u(y, prediction).
AttackOutcome utility_weighted_attack(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                      const utility::UtilityMatrix& u, const AttackSpec& spec);

/// With probability eps the strategic response is replaced by a targeted attack
/// on a class drawn uniformly from [K] (possibly y itself). Utility is 1{prediction in T}.
AttackOutcome noisy_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                             const TargetSet& targets, double eps, const AttackSpec& spec, Rng& rng);

/// Indicator row of a target set.
Vector indicator_row(std::size_t K, const TargetSet& targets);

/// Largest grid the exhaustive oracle will evaluate.
inline constexpr std::uint64_t kMaxOraclePoints = 1'000'000;

/// Predictions of a net on every point of a uniform grid over the L-inf ball
/// around x. Built once, then queried for any utility row.
class OracleGrid {
public:
    OracleGrid(const nn::DenseNet& net, std::span<const double> x, const AttackSpec& spec, std::size_t points_per_dim);

    /// Utility-maximal perturbation for row(predicted). delta = 0 is examined
    /// first, then grid points in lexicographic order; ties keep the earliest.
    AttackOutcome best(std::span<const double> utility_row) const;

    std::size_t size() const { return predictions_.size(); }
    std::size_t prediction_at_zero() const { return zero_prediction_; }
    /// Snaps delta to the nearest grid point and returns that point's prediction.
    std::size_t snapped_prediction(std::span<const double> delta) const;

private:
    Vector point(std::size_t index) const;

    Vector x_;
    AttackSpec spec_;
    std::size_t dim_;
    std::size_t points_;
    std::vector<double> coords_;
    std::size_t zero_prediction_;
    std::vector<std::uint16_t> predictions_;
};

/// Exhaustive search over the grid for the utility-maximal perturbation.
AttackOutcome oracle_attack(const nn::DenseNet& net, std::span<const double> x, std::span<const double> utility_row,
                            const AttackSpec& spec, std::size_t points_per_dim);

} // namespace stratrob::attack
