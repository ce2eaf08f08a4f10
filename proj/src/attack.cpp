#include "stratrob/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "stratrob/error.hpp"

namespace stratrob::attack {

namespace {

double parse_number(const std::string& s) {
    // Accepts plain decimals and simple fractions such as 8/255.
    const auto slash = s.find('/');
    if (slash != std::string::npos) return parse_number(s.substr(0, slash)) / parse_number(s.substr(slash + 1));
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw InputError("attack spec: not a number: '" + s + "'");
    return v;
}

void check_dims(const nn::DenseNet& net, std::span<const double> x) {
    if (x.size() != net.input_dim()) throw InputError("input dimension does not match the network");
}

void clamp_into(Vector& delta, std::span<const double> x, const AttackSpec& spec) {
    if (spec.bounds) {
        const auto& b = *spec.bounds;
        if (b.lo.size() != x.size() || b.hi.size() != x.size()) throw InputError("feature bounds have the wrong length");
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(delta[i], b.lo[i] - x[i], b.hi[i] - x[i]);
    }
    for (auto& v : delta) v = std::clamp(v, -spec.radius, spec.radius);
}

Vector shifted(std::span<const double> x, const Vector& delta) {
    Vector z(x.begin(), x.end());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += delta[i];
    return z;
}

// Ascent direction in logit space with the same sign pattern as the proxy's
// gradient. Single-probability objectives are differentiated through log p,
// which differs from the gradient of p by the positive factor p and cannot
// underflow to zero on confident points.
Vector ascent_logit_direction(const nn::ProxyObjective& obj, std::span<const double> logits) {
    if (obj.kind == nn::ProxyKind::PenalizedMaxTargetProb) return nn::objective_logit_gradient(obj, logits);
    const Vector p = nn::softmax(logits);
    const std::size_t t = nn::active_target(obj, logits);
    Vector g(p.size());
    const double s = obj.kind == nn::ProxyKind::NegTrueProb ? -1.0 : 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) g[k] = -s * p[k];
    g[t] += s;
    return g;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Signed-gradient PGD with best-iterate tracking. The last iterate is returned
// unless an earlier one realized strictly higher utility.
template <typename UtilityFn>
AttackOutcome run_pgd(const nn::DenseNet& net, std::span<const double> x, const nn::ProxyObjective& objective,
                      const AttackSpec& spec, UtilityFn&& utility_of) {
    spec.validate();
    check_dims(net, x);
    Vector delta(x.size(), 0.0);
    if (spec.random_start && spec.radius > 0.0) {
        Rng rng(spec.seed);
        for (auto& v : delta) v = rng.uniform(-spec.radius, spec.radius);
    }
    clamp_into(delta, x, spec);

    AttackOutcome out;
    std::size_t pred = nn::predict(net, shifted(x, delta));
    Vector best_delta = delta;
    std::size_t best_pred = pred;
    double best_util = utility_of(pred);
    double util = best_util;

    for (int s = 0; s < spec.steps; ++s) {
        const Vector z = shifted(x, delta);
        const Vector logits = nn::forward(net, z);
        const Vector grad = nn::backward_from_logits(net, z, ascent_logit_direction(objective, logits)).input;
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += spec.step_size * sign(grad[i]);
        clamp_into(delta, x, spec);

        const Vector next_logits = nn::forward(net, shifted(x, delta));
        out.objective_trace.push_back(nn::objective_value(objective, next_logits));
        pred = nn::argmax(next_logits);
        util = utility_of(pred);
        if (util > best_util) {
            best_util = util;
            best_delta = delta;
            best_pred = pred;
        }
    }
    if (best_util > util) {
        delta = std::move(best_delta);
        pred = best_pred;
        util = best_util;
    }
    out.delta = std::move(delta);
    out.predicted = pred;
    out.achieved_utility = util;
    out.success = util > 0.0;
    return out;
}

void check_targets(const TargetSet& targets, std::size_t y, std::size_t K) {
    if (targets.empty()) throw InputError("target set is empty");
    for (auto t : targets) {
        if (t >= K) throw InputError("target out of range");
        if (t == y) throw InputError("target set must exclude the true class");
    }
}

bool contains(const TargetSet& s, std::size_t v) { return std::find(s.begin(), s.end(), v) != s.end(); }

std::size_t int_pow(std::size_t base, std::size_t exp, std::uint64_t cap) {
    std::uint64_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        r *= base;
        if (r > cap) return static_cast<std::size_t>(cap) + 1;
    }
    return static_cast<std::size_t>(r);
}

} // namespace

void AttackSpec::validate() const {
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw InputError("attack radius must be a finite non-negative number");
    if (steps < 1) throw InputError("attack needs at least one step");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InputError("attack step size must be positive");
}

AttackSpec AttackSpec::paper_train() {
    AttackSpec s;
    s.radius = 8.0 / 255.0;
    s.steps = 7;
    s.step_size = 0.011;
    s.random_start = true;
    return s;
}

AttackSpec AttackSpec::paper_eval() {
    AttackSpec s;
    s.radius = 8.0 / 255.0;
    s.steps = 20;
    s.step_size = 0.0039;
    s.random_start = false;
    return s;
}

AttackSpec AttackSpec::parse(const std::string& text) {
    if (text == "paper-train") return paper_train();
    if (text == "paper-eval") return paper_eval();
    if (text.rfind("linf:", 0) != 0) throw InputError("attack spec must start with 'linf:' or name a preset");
    AttackSpec s;
    s.random_start = false;
    std::size_t pos = 5;
    bool seen_r = false, seen_steps = false, seen_step = false;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        const std::string field = text.substr(pos, comma - pos);
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw InputError("attack spec field '" + field + "' is not key=value");
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "r") {
            s.radius = parse_number(value);
            seen_r = true;
        } else if (key == "steps") {
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), s.steps);
            if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
                throw InputError("attack spec: steps must be an integer");
            seen_steps = true;
        } else if (key == "step") {
            s.step_size = parse_number(value);
            seen_step = true;
        } else if (key == "rand") {
            if (value != "0" && value != "1") throw InputError("attack spec: rand must be 0 or 1");
            s.random_start = value == "1";
        } else if (key == "seed") {
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), s.seed);
            if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
                throw InputError("attack spec: seed must be a non-negative integer");
        } else {
            throw InputError("attack spec: unknown field '" + key + "'");
        }
        pos = comma + 1;
    }
    if (!seen_r || !seen_steps || !seen_step) throw InputError("attack spec needs r, steps and step");
    s.validate();
    return s;
}

std::string AttackSpec::to_string() const {
    return "linf:r=" + utility::format_double(radius) + ",steps=" + std::to_string(steps) +
           ",step=" + utility::format_double(step_size) + ",rand=" + (random_start ? "1" : "0") +
           ",seed=" + std::to_string(seed);
}

Vector project_linf(std::span<const double> delta, double r) {
    if (!(r >= 0.0)) throw InputError("projection radius must be non-negative");
    Vector out(delta.begin(), delta.end());
    for (auto& v : out) v = std::clamp(v, -r, r);
    return out;
}

AttackOutcome pgd_untargeted(const nn::DenseNet& net, std::span<const double> x, std::size_t y, const AttackSpec& spec) {
    if (y >= net.num_classes()) throw InputError("label out of range");
    return run_pgd(net, x, nn::ProxyObjective::neg_true_prob(y), spec,
                   [y](std::size_t pred) { return pred != y ? 1.0 : 0.0; });
}

AttackOutcome pgd_targeted(const nn::DenseNet& net, std::span<const double> x, std::size_t target,
                           const AttackSpec& spec) {
    if (target >= net.num_classes()) throw InputError("target out of range");
    return run_pgd(net, x, nn::ProxyObjective::max_prob({target}), spec,
                   [target](std::size_t pred) { return pred == target ? 1.0 : 0.0; });
}

AttackOutcome strategic_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                 const TargetSet& targets, const AttackSpec& spec) {
    check_targets(targets, y, net.num_classes());
    return run_pgd(net, x, nn::ProxyObjective::max_prob(targets), spec,
                   [&](std::size_t pred) { return contains(targets, pred) ? 1.0 : 0.0; });
}

AttackOutcome preference_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                  const TargetSet& targets, const AttackSpec& spec) {
    check_targets(targets, y, net.num_classes());
    return run_pgd(net, x, nn::ProxyObjective::penalized(targets), spec,
                   [&](std::size_t pred) { return contains(targets, pred) ? 1.0 : 0.0; });
}

AttackOutcome sequential_attack_with(std::span<const double> row, std::size_t dim, std::size_t clean_prediction,
                                     const TargetedAttacker& attempt) {
    TargetSet order;
    for (std::size_t c = 0; c < row.size(); ++c)
        if (row[c] > 0.0) order.push_back(c);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });

    if (order.empty()) {
        AttackOutcome none;
        none.delta.assign(dim, 0.0);
        none.predicted = clean_prediction;
        none.achieved_utility = row[clean_prediction];
        none.success = none.achieved_utility > 0.0;
        return none;
    }
    std::optional<AttackOutcome> first;
    for (auto t : order) {
        AttackOutcome o = attempt(t);
        if (o.predicted == t) {
            o.achieved_utility = row[o.predicted];
            o.success = o.achieved_utility > 0.0;
            return o;
        }
        if (!first) first = std::move(o);
    }
    first->achieved_utility = row[first->predicted];
    first->success = first->achieved_utility > 0.0;
    return std::move(*first);
}

AttackOutcome sequential_attack(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                const utility::UtilityMatrix& u, const AttackSpec& spec) {
    if (u.num_classes() != net.num_classes()) throw InputError("utility K does not match the network");
    if (y >= u.num_classes()) throw InputError("label out of range");
    check_dims(net, x);
    return sequential_attack_with(u.row(y), x.size(), nn::predict(net, x),
                                  [&](std::size_t t) { return pgd_targeted(net, x, t, spec); });
}

AttackOutcome utility_weighted_attack(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                                      const utility::UtilityMatrix& u, const AttackSpec& spec) {
    if (u.num_classes() != net.num_classes()) throw InputError("utility K does not match the network");
    if (y >= u.num_classes()) throw InputError("label out of range");
    const auto row = u.row(y);
    if (std::none_of(row.begin(), row.end(), [](double v) { return v > 0.0; }))
        throw InputError("utility row is all zero; nothing to attack");
    return run_pgd(net, x, nn::ProxyObjective::weighted(Vector(row.begin(), row.end())), spec,
                   [&](std::size_t pred) { return row[pred]; });
}

AttackOutcome noisy_response(const nn::DenseNet& net, std::span<const double> x, std::size_t y,
                             const TargetSet& targets, double eps, const AttackSpec& spec, Rng& rng) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("noise probability must lie in [0, 1]");
    check_targets(targets, y, net.num_classes());
    if (rng.uniform01() < eps) {
        const std::size_t t = rng.uniform_int(net.num_classes());
        AttackOutcome o = pgd_targeted(net, x, t, spec);
        o.achieved_utility = contains(targets, o.predicted) ? 1.0 : 0.0;
        o.success = o.achieved_utility > 0.0;
        o.redirected_target = t;
        return o;
    }
    return strategic_response(net, x, y, targets, spec);
}

Vector indicator_row(std::size_t K, const TargetSet& targets) {
    Vector row(K, 0.0);
    for (auto t : targets) {
        if (t >= K) throw InputError("target out of range");
        row[t] = 1.0;
    }
    return row;
}

OracleGrid::OracleGrid(const nn::DenseNet& net, std::span<const double> x, const AttackSpec& spec,
                       std::size_t points_per_dim)
    : x_(x.begin(), x.end()), spec_(spec), dim_(x.size()), points_(points_per_dim) {
    check_dims(net, x);
    if (!(spec.radius >= 0.0)) throw InputError("attack radius must be non-negative");
    if (points_ < 1) throw InputError("oracle grid needs at least one point per dimension");
    if (net.num_classes() > std::numeric_limits<std::uint16_t>::max()) throw CapacityError("too many classes for the oracle");
    const std::size_t total = int_pow(points_, dim_, kMaxOraclePoints);
    if (total > kMaxOraclePoints)
        throw CapacityError("oracle grid of " + std::to_string(points_) + "^" + std::to_string(dim_) +
                            " points exceeds the limit of " + std::to_string(kMaxOraclePoints));

    const double r = spec.radius;
    const std::size_t g = points_;
    for (std::size_t i = 0; i < g; ++i) {
        double v;
        if (g == 1 || 2 * i == g - 1) v = 0.0;
        else if (i == 0) v = -r;
        else if (i == g - 1) v = r;
        else v = r * (2.0 * static_cast<double>(i) - static_cast<double>(g - 1)) / static_cast<double>(g - 1);
        coords_.push_back(std::clamp(v, -r, r));
    }

    Vector zero(dim_, 0.0);
    clamp_into(zero, x_, spec_);
    zero_prediction_ = nn::predict(net, shifted(x_, zero));
    predictions_.resize(total);
    for (std::size_t idx = 0; idx < total; ++idx)
        predictions_[idx] = static_cast<std::uint16_t>(nn::predict(net, shifted(x_, point(idx))));
}

Vector OracleGrid::point(std::size_t index) const {
    Vector d(dim_);
    for (std::size_t k = dim_; k-- > 0;) {
        d[k] = coords_[index % points_];
        index /= points_;
    }
    clamp_into(d, x_, spec_);
    return d;
}

AttackOutcome OracleGrid::best(std::span<const double> utility_row) const {
    AttackOutcome out;
    out.delta.assign(dim_, 0.0);
    clamp_into(out.delta, x_, spec_);
    out.predicted = zero_prediction_;
    double best = utility_row[zero_prediction_];
    std::size_t best_idx = predictions_.size();
    for (std::size_t idx = 0; idx < predictions_.size(); ++idx) {
        const double v = utility_row[predictions_[idx]];
        if (v > best) {
            best = v;
            best_idx = idx;
        }
    }
    if (best_idx != predictions_.size()) {
        out.delta = point(best_idx);
        out.predicted = predictions_[best_idx];
    }
    out.achieved_utility = best;
    out.success = best > 0.0;
    return out;
}

std::size_t OracleGrid::snapped_prediction(std::span<const double> delta) const {
    if (delta.size() != dim_) throw InputError("perturbation has the wrong dimension");
    std::size_t idx = 0;
    for (std::size_t k = 0; k < dim_; ++k) {
        std::size_t nearest = 0;
        for (std::size_t i = 1; i < points_; ++i)
            if (std::abs(coords_[i] - delta[k]) < std::abs(coords_[nearest] - delta[k])) nearest = i;
        idx = idx * points_ + nearest;
    }
    return predictions_[idx];
}

AttackOutcome oracle_attack(const nn::DenseNet& net, std::span<const double> x, std::span<const double> utility_row,
                            const AttackSpec& spec, std::size_t points_per_dim) {
    if (utility_row.size() != net.num_classes()) throw InputError("utility row has the wrong length");
    return OracleGrid(net, x, spec, points_per_dim).best(utility_row);
}

} // namespace stratrob::attack
