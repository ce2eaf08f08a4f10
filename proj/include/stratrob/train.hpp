#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stratrob/attack.hpp"
#include "stratrob/data.hpp"
#include "stratrob/nn.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::train {

using utility::TargetSet;
using utility::UncertaintySet;
using utility::UtilityMatrix;

enum class ObjectiveKind { Clean, Adversarial, StrategicSingle, StrategicSet, Mixed, Sequential };

/// What the simulated opponent optimizes during training.
struct Objective {
    ObjectiveKind kind = ObjectiveKind::Clean;
    std::optional<UtilityMatrix> u;
    std::optional<UncertaintySet> set;
    double mix_eps = 0.0;  // Mixed only
    bool fallback = false; // Sequential only: failed sequences fall back to an untargeted attack

    static Objective clean() { return {}; }
    static Objective adversarial();
    static Objective strategic_single(UtilityMatrix u);
    static Objective strategic_set(UncertaintySet set);
    static Objective mixed(UtilityMatrix u, UncertaintySet set, double eps);
    static Objective sequential(UtilityMatrix u, bool fallback = false);

    std::string name() const;
};

struct TrainConfig {
    int epochs = 1;
    std::size_t batch_size = 32;
    double base_lr = 0.01;
    double momentum = 0.9;
    std::vector<int> lr_drop_epochs;
    attack::AttackSpec attack = attack::AttackSpec::paper_train();
    Objective objective;
    std::uint64_t seed = 0;
    /// Probability of swapping a strategic response for a random targeted one.
    /// Unset means 0.1, or 0.5 when training against a preference set.
    std::optional<double> noise_eps;
    int threads = 1;

    /// Throws ConfigError. K is the class count of the data being trained on.
    void validate(std::size_t K) const;

    double lr_at(int epoch) const;
    double effective_noise() const;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
    /// Fraction of attacked examples on which the opponent realized positive utility.
    double attack_success = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    /// clean, adversarial, single, representative, enumerate, mixed or sequential.
    std::string path;
    std::uint64_t response_calls = 0;
    std::uint64_t attacked_examples = 0;
    std::uint64_t mixing_draws = 0;
    std::uint64_t mixing_replacements = 0;
    std::uint64_t fallbacks = 0;
    std::string checkpoint;
};

struct TrainResult {
    nn::DenseNet net;
    TrainLog log;
};

/// Runs minibatch SGD on the cross-entropy of attacked inputs, dispatching on
/// cfg.objective. A pure function of its arguments.
TrainResult train(const nn::DenseNet& net0, const data::Dataset& data, const TrainConfig& cfg);

TrainResult train_clean(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg);
TrainResult train_adversarial(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg);
TrainResult train_strategic_single(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                                   const UtilityMatrix& u);
TrainResult train_strategic_set(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                                const UncertaintySet& set);
TrainResult train_mixed(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg, const UtilityMatrix& u,
                        const UncertaintySet& set, double eps);
TrainResult train_sequential(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                             const UtilityMatrix& u, bool fallback = false);

/// Batch utility under risk mitigation: u with probability 1 - eps, otherwise a
/// uniform draw from the set. `replaced` reports which branch was taken.
UtilityMatrix draw_batch_utility(const UtilityMatrix& u, const UncertaintySet& set, double eps, Rng& rng,
                                 bool* replaced = nullptr);

struct CandidateChoice {
    std::size_t index = 0;
    std::vector<double> losses; // cross-entropy at y on each candidate's attacked input
    attack::AttackOutcome outcome;
};

/// Attacks x once per candidate target set (an empty set leaves x clean) and
/// keeps the candidate with the largest learner loss, first on ties.
CandidateChoice select_worst_candidate(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                       const std::vector<TargetSet>& candidates, const attack::AttackSpec& spec,
                                       bool penalized_proxy);

} // namespace stratrob::train
