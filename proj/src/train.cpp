#include "stratrob/train.hpp"

#include <algorithm>
#include <cmath>

#include "stratrob/error.hpp"
#include "stratrob/parallel.hpp"
#include "stratrob/rng.hpp"

namespace stratrob::train {

namespace {

enum Stream : std::uint64_t { kShuffle = 1, kAttack = 2, kNoise = 3, kMix = 4 };

using nn::Vector;

bool contains(const TargetSet& s, std::size_t v) { return std::find(s.begin(), s.end(), v) != s.end(); }

Vector shifted(std::span<const double> x, const Vector& delta) {
    Vector z(x.begin(), x.end());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += delta[i];
    return z;
}

// Response to T with stabilization noise: with probability eps a targeted
// attack on a uniformly drawn class replaces the strategic one.
attack::AttackOutcome respond(const nn::DenseNet& net, std::span<const double> x, std::size_t y, const TargetSet& T,
                              double eps, const attack::AttackSpec& spec, Rng& rng, bool penalized) {
    if (!penalized) return attack::noisy_response(net, x, y, T, eps, spec, rng);
    if (rng.uniform01() < eps) {
        const std::size_t t = rng.uniform_int(net.num_classes());
        auto o = attack::pgd_targeted(net, x, t, spec);
        o.achieved_utility = contains(T, o.predicted) ? 1.0 : 0.0;
        o.success = o.achieved_utility > 0.0;
        o.redirected_target = t;
        return o;
    }
    return attack::preference_response(net, x, y, T, spec);
}

struct Prepared {
    Vector input;
    bool attacked = false;
    bool success = false;
    std::uint64_t calls = 0;
    bool fell_back = false;
};

void check_utility(const UtilityMatrix& u, std::size_t K, const char* what) {
    if (u.num_classes() != K)
        throw ConfigError(std::string(what) + " has K=" + std::to_string(u.num_classes()) + " but the data has K=" +
                          std::to_string(K));
}

} // namespace

Objective Objective::adversarial() {
    Objective o;
    o.kind = ObjectiveKind::Adversarial;
    return o;
}

Objective Objective::strategic_single(UtilityMatrix u) {
    Objective o;
    o.kind = ObjectiveKind::StrategicSingle;
    o.u = std::move(u);
    return o;
}

Objective Objective::strategic_set(UncertaintySet set) {
    Objective o;
    o.kind = ObjectiveKind::StrategicSet;
    o.set = std::move(set);
    return o;
}

Objective Objective::mixed(UtilityMatrix u, UncertaintySet set, double eps) {
    Objective o;
    o.kind = ObjectiveKind::Mixed;
    o.u = std::move(u);
    o.set = std::move(set);
    o.mix_eps = eps;
    return o;
}

Objective Objective::sequential(UtilityMatrix u, bool fallback) {
    Objective o;
    o.kind = ObjectiveKind::Sequential;
    o.u = std::move(u);
    o.fallback = fallback;
    return o;
}

std::string Objective::name() const {
    switch (kind) {
    case ObjectiveKind::Clean: return "clean";
    case ObjectiveKind::Adversarial: return "adversarial";
    case ObjectiveKind::StrategicSingle: return "strategic_single";
    case ObjectiveKind::StrategicSet: return "strategic_set";
    case ObjectiveKind::Mixed: return "mixed";
    case ObjectiveKind::Sequential: return "sequential";
    }
    return "?";
}

void TrainConfig::validate(std::size_t K) const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
        if (lr_drop_epochs[i] < 0 || lr_drop_epochs[i] >= std::max(epochs, 0))
            throw ConfigError("lr_drop_epochs entries must lie in [0, epochs)");
        if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
            throw ConfigError("lr_drop_epochs must be strictly increasing");
    }
    if (noise_eps && !(*noise_eps >= 0.0 && *noise_eps <= 1.0)) throw ConfigError("noise_eps must lie in [0, 1]");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    try {
        attack.validate();
    } catch (const InputError& e) {
        throw ConfigError(e.what());
    }
    const auto& o = objective;
    switch (o.kind) {
    case ObjectiveKind::Clean:
    case ObjectiveKind::Adversarial:
        break;
    case ObjectiveKind::StrategicSingle:
    case ObjectiveKind::Sequential:
        if (!o.u) throw ConfigError(o.name() + " objective needs a utility matrix");
        check_utility(*o.u, K, "utility");
        break;
    case ObjectiveKind::StrategicSet:
        if (!o.set) throw ConfigError("strategic_set objective needs an uncertainty set");
        if (o.set->num_classes() != K) throw ConfigError("uncertainty set K does not match the data");
        break;
    case ObjectiveKind::Mixed:
        if (!o.u || !o.set) throw ConfigError("mixed objective needs a utility and an uncertainty set");
        check_utility(*o.u, K, "utility");
        if (o.set->num_classes() != K) throw ConfigError("uncertainty set K does not match the data");
        if (!(o.mix_eps >= 0.0 && o.mix_eps <= 1.0)) throw ConfigError("mixing eps must lie in [0, 1]");
        break;
    }
}

double TrainConfig::lr_at(int epoch) const {
    int drops = 0;
    for (int e : lr_drop_epochs)
        if (e <= epoch) ++drops;
    return base_lr * std::pow(0.1, drops);
}

double TrainConfig::effective_noise() const {
    if (noise_eps) return *noise_eps;
    const bool preference = objective.set && objective.set->kind() == utility::SetKind::Preference &&
                            (objective.kind == ObjectiveKind::StrategicSet || objective.kind == ObjectiveKind::Mixed);
    return preference ? 0.5 : 0.1;
}

UtilityMatrix draw_batch_utility(const UtilityMatrix& u, const UncertaintySet& set, double eps, Rng& rng,
                                 bool* replaced) {
    const bool swap = rng.uniform01() < eps;
    if (replaced) *replaced = swap;
    return swap ? utility::sample_member(set, rng) : u;
}

CandidateChoice select_worst_candidate(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                       const std::vector<TargetSet>& candidates, const attack::AttackSpec& spec,
                                       bool penalized_proxy) {
    if (candidates.empty()) throw InputError("no candidate target sets");
    CandidateChoice choice;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        attack::AttackOutcome o;
        if (candidates[c].empty()) {
            o.delta.assign(x.size(), 0.0);
            o.predicted = nn::predict(net, x);
        } else {
            o = penalized_proxy ? attack::preference_response(net, x, y, candidates[c], spec)
                                : attack::strategic_response(net, x, y, candidates[c], spec);
        }
        const double loss = nn::cross_entropy(nn::forward(net, shifted(x, o.delta)), y);
        choice.losses.push_back(loss);
        if (c == 0 || loss > choice.losses[choice.index]) {
            choice.index = c;
            choice.outcome = std::move(o);
        }
    }
    return choice;
}

TrainResult train(const nn::DenseNet& net0, const data::Dataset& data, const TrainConfig& cfg) {
    data.validate();
    if (data.empty()) throw DataError("training data is empty");
    if (net0.input_dim() != data.d) throw ConfigError("network input dimension does not match the data");
    if (net0.num_classes() != data.K) throw ConfigError("network class count does not match the data");
    cfg.validate(data.K);

    const auto& obj = cfg.objective;
    const std::size_t K = data.K;
    const double noise = cfg.effective_noise();

    TrainLog log;
    std::optional<UtilityMatrix> fixed_u; // utility used by the single-utility path
    bool penalized = false;
    std::vector<std::vector<TargetSet>> candidates; // enumerate path, per class
    switch (obj.kind) {
    case ObjectiveKind::Clean: log.path = "clean"; break;
    case ObjectiveKind::Adversarial: log.path = "adversarial"; break;
    case ObjectiveKind::StrategicSingle:
        log.path = "single";
        fixed_u = *obj.u;
        break;
    case ObjectiveKind::StrategicSet:
        penalized = obj.set->kind() == utility::SetKind::Preference;
        if (auto rep = utility::worst_case_representative(*obj.set)) {
            log.path = "representative";
            fixed_u = std::move(*rep);
        } else {
            log.path = "enumerate";
            for (std::size_t y = 0; y < K; ++y) candidates.push_back(utility::row_candidates(*obj.set, y));
        }
        break;
    case ObjectiveKind::Mixed:
        log.path = "mixed";
        penalized = obj.set->kind() == utility::SetKind::Preference;
        break;
    case ObjectiveKind::Sequential: log.path = "sequential"; break;
    }

    nn::DenseNet net = net0;
    nn::SgdState sgd;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        const auto e = static_cast<std::uint64_t>(epoch);
        const auto batches = data::batch_iter(data.size(), cfg.batch_size, derive_seed(cfg.seed, {kShuffle, e}));
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0, attacked = 0, successes = 0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            std::optional<UtilityMatrix> batch_u = fixed_u;
            if (obj.kind == ObjectiveKind::Mixed) {
                Rng mix(derive_seed(cfg.seed, {kMix, e, b}));
                bool replaced = false;
                batch_u = draw_batch_utility(*obj.u, *obj.set, obj.mix_eps, mix, &replaced);
                ++log.mixing_draws;
                if (replaced) ++log.mixing_replacements;
            }

            std::vector<Prepared> prepared(batch.size());
            parallel_for(batch.size(), cfg.threads, [&](std::size_t pos) {
                const std::size_t i = batch[pos];
                const auto x = data.x(i);
                const std::size_t y = data.y(i);
                const auto spec = cfg.attack.with_seed(derive_seed(cfg.seed, {kAttack, e, b, i}));
                Prepared& p = prepared[pos];
                auto use = [&](const attack::AttackOutcome& o) {
                    p.input = shifted(x, o.delta);
                    p.attacked = true;
                    p.success = o.success;
                };
                switch (obj.kind) {
                case ObjectiveKind::Clean:
                    break;
                case ObjectiveKind::Adversarial:
                    use(attack::pgd_untargeted(net, x, y, spec));
                    p.calls = 1;
                    break;
                case ObjectiveKind::StrategicSingle:
                case ObjectiveKind::StrategicSet:
                case ObjectiveKind::Mixed: {
                    Rng rng(derive_seed(cfg.seed, {kNoise, e, b, i}));
                    if (batch_u) {
                        const TargetSet T = utility::targets_of(*batch_u, y);
                        if (T.empty()) break;
                        use(respond(net, x, y, T, noise, spec, rng, penalized));
                        p.calls = 1;
                        break;
                    }
                    const auto& cands = candidates[y];
                    TargetSet any;
                    for (const auto& c : cands)
                        for (auto t : c)
                            if (!contains(any, t)) any.push_back(t);
                    if (any.empty()) break;
                    if (rng.uniform01() < noise) {
                        auto o = attack::pgd_targeted(net, x, rng.uniform_int(K), spec);
                        o.success = contains(any, o.predicted);
                        use(o);
                        p.calls = 1;
                        break;
                    }
                    auto choice = select_worst_candidate(net, x, y, cands, spec, penalized);
                    const auto& chosen = cands[choice.index];
                    choice.outcome.success = contains(chosen, choice.outcome.predicted);
                    use(choice.outcome);
                    p.calls = static_cast<std::uint64_t>(
                        std::count_if(cands.begin(), cands.end(), [](const TargetSet& c) { return !c.empty(); }));
                    break;
                }
                case ObjectiveKind::Sequential: {
                    const auto row = obj.u->row(y);
                    if (std::none_of(row.begin(), row.end(), [](double v) { return v > 0.0; })) break;
                    auto o = attack::sequential_attack(net, x, y, *obj.u, spec);
                    p.calls = 1;
                    if (obj.fallback && !o.success) {
                        o = attack::pgd_untargeted(net, x, y, spec);
                        o.success = false;
                        p.fell_back = true;
                        p.calls = 2;
                    }
                    use(o);
                    break;
                }
                }
                if (p.input.empty()) p.input.assign(x.begin(), x.end());
            });

            auto grads = nn::GradientBundle::zeros_like(net);
            const double scale = 1.0 / static_cast<double>(batch.size());
            for (std::size_t pos = 0; pos < batch.size(); ++pos) {
                const Prepared& p = prepared[pos];
                const std::size_t y = data.y(batch[pos]);
                auto lg = nn::backward(net, p.input, y);
                loss_sum += lg.loss;
                if (nn::predict(net, p.input) == y) ++correct;
                grads.accumulate(lg.grads, scale);
                ++seen;
                if (p.attacked) ++attacked;
                if (p.success) ++successes;
                log.response_calls += p.calls;
                if (p.fell_back) ++log.fallbacks;
            }
            nn::sgd_step(net, grads, lr, cfg.momentum, sgd);
        }
        log.attacked_examples += attacked;
        EpochStats st;
        st.loss = loss_sum / static_cast<double>(seen);
        st.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        st.attack_success = attacked ? static_cast<double>(successes) / static_cast<double>(attacked) : 0.0;
        st.lr = lr;
        log.epochs.push_back(st);
    }
    return {std::move(net), std::move(log)};
}

TrainResult train_clean(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg) {
    cfg.objective = Objective::clean();
    return train(net0, data, cfg);
}

TrainResult train_adversarial(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg) {
    cfg.objective = Objective::adversarial();
    return train(net0, data, cfg);
}

TrainResult train_strategic_single(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                                   const UtilityMatrix& u) {
    cfg.objective = Objective::strategic_single(u);
    return train(net0, data, cfg);
}

TrainResult train_strategic_set(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                                const UncertaintySet& set) {
    cfg.objective = Objective::strategic_set(set);
    return train(net0, data, cfg);
}

TrainResult train_mixed(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg, const UtilityMatrix& u,
                        const UncertaintySet& set, double eps) {
    cfg.objective = Objective::mixed(u, set, eps);
    return train(net0, data, cfg);
}

TrainResult train_sequential(const nn::DenseNet& net0, const data::Dataset& data, TrainConfig cfg,
                             const UtilityMatrix& u, bool fallback) {
    cfg.objective = Objective::sequential(u, fallback);
    return train(net0, data, cfg);
}

} // namespace stratrob::train
