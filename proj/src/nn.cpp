#include "stratrob/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stratrob/error.hpp"
#include "stratrob/rng.hpp"

namespace stratrob::nn {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

void check_input(const DenseNet& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw InputError("input has dimension " + std::to_string(x.size()) + ", net expects " +
                         std::to_string(net.input_dim()));
    if (!all_finite(x)) throw InputError("input has non-finite entries");
}

// Pre-activations and activations for every layer; acts[0] is the input.
struct Trace {
    std::vector<Vector> pre;
    std::vector<Vector> acts;
};

Trace run(const DenseNet& net, std::span<const double> x) {
    Trace t;
    t.acts.emplace_back(x.begin(), x.end());
    for (const auto& layer : net.layers()) {
        const Vector& in = t.acts.back();
        Vector z(layer.out_dim());
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            double s = layer.bias[r];
            const double* w = &layer.weights.data[r * layer.in_dim()];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) s += w[c] * in[c];
            z[r] = s;
        }
        Vector a = z;
        if (layer.activation == Activation::Relu)
            for (auto& v : a) v = v > 0.0 ? v : 0.0;
        t.pre.push_back(std::move(z));
        t.acts.push_back(std::move(a));
    }
    return t;
}

GradientBundle pull_back(const DenseNet& net, const Trace& trace, std::span<const double> logit_grad) {
    const auto& layers = net.layers();
    GradientBundle g = GradientBundle::zeros_like(net);
    Vector upstream(logit_grad.begin(), logit_grad.end());
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        if (layer.activation == Activation::Relu)
            for (std::size_t r = 0; r < upstream.size(); ++r)
                if (!(trace.pre[li][r] > 0.0)) upstream[r] = 0.0;
        const Vector& in = trace.acts[li];
        auto& lg = g.params[li];
        Vector down(layer.in_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double u = upstream[r];
            lg.bias[r] = u;
            if (u == 0.0) continue;
            const double* w = &layer.weights.data[r * layer.in_dim()];
            double* gw = &lg.weights.data[r * layer.in_dim()];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) {
                gw[c] = u * in[c];
                down[c] += w[c] * u;
            }
        }
        upstream = std::move(down);
    }
    g.input = std::move(upstream);
    return g;
}

bool contains(const std::vector<std::size_t>& set, std::size_t v) {
    return std::find(set.begin(), set.end(), v) != set.end();
}

// Probability-space argmax over `members` (lowest index on ties); K if none.
std::size_t best_in(const Vector& p, std::size_t K, auto&& member) {
    std::size_t best = K;
    for (std::size_t k = 0; k < K; ++k)
        if (member(k) && (best == K || p[k] > p[best])) best = k;
    return best;
}

// d p_t / d logits = p_t (e_t - p), scaled and added into g.
void add_prob_grad(Vector& g, const Vector& p, std::size_t t, double scale) {
    for (std::size_t k = 0; k < p.size(); ++k) g[k] -= scale * p[t] * p[k];
    g[t] += scale * p[t];
}

void validate_objective(const ProxyObjective& obj, std::size_t K) {
    if (obj.kind == ProxyKind::UtilityWeightedProb) {
        if (obj.weights.size() != K) throw InputError("weight row size does not match class count");
        if (std::none_of(obj.weights.begin(), obj.weights.end(), [](double w) { return w > 0.0; }))
            throw InputError("weighted objective needs a strictly positive weight");
        return;
    }
    if (obj.targets.empty()) throw InputError("objective target set is empty");
    for (auto t : obj.targets)
        if (t >= K) throw InputError("objective target out of range");
}

} // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InputError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weights.rows == 0 || l.weights.cols == 0)
            throw InputError("layer " + std::to_string(i) + " has an empty weight matrix");
        if (l.weights.data.size() != l.weights.rows * l.weights.cols || l.bias.size() != l.weights.rows)
            throw InputError("layer " + std::to_string(i) + " has inconsistent shapes");
        if (i > 0 && l.in_dim() != layers_[i - 1].out_dim())
            throw InputError("layer " + std::to_string(i) + " input does not chain with previous output");
        if (!all_finite(l.weights.data) || !all_finite(l.bias))
            throw InputError("layer " + std::to_string(i) + " has non-finite parameters");
    }
    if (layers_.back().activation != Activation::Identity)
        throw InputError("output layer must produce raw logits (identity activation)");
}

DenseNet DenseNet::random(std::span<const std::size_t> widths, std::uint64_t seed) {
    if (widths.size() < 2) throw InputError("need at least input and output widths");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t in = widths[i], out = widths[i + 1];
        const double s = std::sqrt(6.0 / static_cast<double>(in + out));
        DenseLayer l;
        l.weights = Matrix(out, in);
        for (auto& w : l.weights.data) w = rng.uniform(-s, s);
        l.bias.assign(out, 0.0);
        l.activation = (i + 2 == widths.size()) ? Activation::Identity : Activation::Relu;
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

DenseNet DenseNet::linear(Matrix weights, Vector bias) {
    return DenseNet({DenseLayer{std::move(weights), std::move(bias), Activation::Identity}});
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.data.size() + l.bias.size();
    return n;
}

Vector DenseNet::parameters() const {
    Vector flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weights.data.begin(), l.weights.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void DenseNet::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw InputError("parameter vector has the wrong length");
    if (!all_finite(flat)) throw InputError("parameters must be finite");
    std::size_t o = 0;
    for (auto& l : layers_) {
        std::copy_n(flat.begin() + o, l.weights.data.size(), l.weights.data.begin());
        o += l.weights.data.size();
        std::copy_n(flat.begin() + o, l.bias.size(), l.bias.begin());
        o += l.bias.size();
    }
}

GradientBundle GradientBundle::zeros_like(const DenseNet& net) {
    GradientBundle g;
    for (const auto& l : net.layers()) g.params.push_back({Matrix(l.out_dim(), l.in_dim()), Vector(l.out_dim(), 0.0)});
    g.input.assign(net.input_dim(), 0.0);
    return g;
}

Vector GradientBundle::flat_params() const {
    Vector flat;
    for (const auto& l : params) {
        flat.insert(flat.end(), l.weights.data.begin(), l.weights.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void GradientBundle::accumulate(const GradientBundle& other, double scale) {
    if (other.params.size() != params.size()) throw InputError("gradient bundles have different shapes");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& a = params[i];
        const auto& b = other.params[i];
        if (a.weights.data.size() != b.weights.data.size() || a.bias.size() != b.bias.size())
            throw InputError("gradient bundles have different shapes");
        for (std::size_t j = 0; j < a.weights.data.size(); ++j) a.weights.data[j] += scale * b.weights.data[j];
        for (std::size_t j = 0; j < a.bias.size(); ++j) a.bias[j] += scale * b.bias[j];
    }
    if (input.size() == other.input.size())
        for (std::size_t j = 0; j < input.size(); ++j) input[j] += scale * other.input[j];
}

Vector forward(const DenseNet& net, std::span<const double> x) {
    check_input(net, x);
    return std::move(run(net, x).acts.back());
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw InputError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::size_t predict(const DenseNet& net, std::span<const double> x) { return argmax(forward(net, x)); }

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw InputError("softmax of an empty vector");
    if (!all_finite(logits)) throw InputError("softmax input has non-finite entries");
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (auto& v : p) v /= z;
    return p;
}

double cross_entropy(std::span<const double> logits, std::size_t y) {
    if (y >= logits.size()) throw InputError("label " + std::to_string(y) + " out of range");
    if (!all_finite(logits)) throw InputError("cross-entropy input has non-finite entries");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return std::log(z) + m - logits[y];
}

LossAndGrads backward(const DenseNet& net, std::span<const double> x, std::size_t y) {
    check_input(net, x);
    if (y >= net.num_classes()) throw InputError("label " + std::to_string(y) + " out of range");
    const Trace trace = run(net, x);
    const Vector& logits = trace.acts.back();
    Vector g = softmax(logits);
    g[y] -= 1.0;
    return {cross_entropy(logits, y), pull_back(net, trace, g)};
}

GradientBundle backward_from_logits(const DenseNet& net, std::span<const double> x,
                                    std::span<const double> logit_grad) {
    check_input(net, x);
    if (logit_grad.size() != net.num_classes()) throw InputError("logit gradient has the wrong length");
    return pull_back(net, run(net, x), logit_grad);
}

ProxyObjective ProxyObjective::max_prob(std::vector<std::size_t> targets) {
    return {ProxyKind::MaxTargetProb, std::move(targets), {}};
}

ProxyObjective ProxyObjective::penalized(std::vector<std::size_t> targets) {
    return {ProxyKind::PenalizedMaxTargetProb, std::move(targets), {}};
}

ProxyObjective ProxyObjective::weighted(Vector weights) { return {ProxyKind::UtilityWeightedProb, {}, std::move(weights)}; }

ProxyObjective ProxyObjective::neg_true_prob(std::size_t y) { return {ProxyKind::NegTrueProb, {y}, {}}; }

std::size_t active_target(const ProxyObjective& obj, std::span<const double> logits) {
    const std::size_t K = logits.size();
    validate_objective(obj, K);
    const Vector p = softmax(logits);
    switch (obj.kind) {
    case ProxyKind::MaxTargetProb:
    case ProxyKind::PenalizedMaxTargetProb:
        return best_in(p, K, [&](std::size_t k) { return contains(obj.targets, k); });
    case ProxyKind::UtilityWeightedProb: {
        std::size_t best = K;
        for (std::size_t k = 0; k < K; ++k) {
            if (!(obj.weights[k] > 0.0)) continue;
            if (best == K || obj.weights[k] * p[k] > obj.weights[best] * p[best]) best = k;
        }
        return best;
    }
    case ProxyKind::NegTrueProb:
        return obj.targets.front();
    }
    return K;
}

double objective_value(const ProxyObjective& obj, std::span<const double> logits) {
    const std::size_t K = logits.size();
    validate_objective(obj, K);
    const Vector p = softmax(logits);
    const std::size_t t = active_target(obj, logits);
    switch (obj.kind) {
    case ProxyKind::MaxTargetProb:
        return p[t];
    case ProxyKind::PenalizedMaxTargetProb: {
        const std::size_t o = best_in(p, K, [&](std::size_t k) { return !contains(obj.targets, k); });
        return p[t] - (o == K ? 0.0 : p[o]);
    }
    case ProxyKind::UtilityWeightedProb:
        return obj.weights[t] * p[t];
    case ProxyKind::NegTrueProb:
        return -p[t];
    }
    return 0.0;
}

Vector objective_logit_gradient(const ProxyObjective& obj, std::span<const double> logits) {
    const std::size_t K = logits.size();
    validate_objective(obj, K);
    const Vector p = softmax(logits);
    const std::size_t t = active_target(obj, logits);
    Vector g(K, 0.0);
    switch (obj.kind) {
    case ProxyKind::MaxTargetProb:
        add_prob_grad(g, p, t, 1.0);
        break;
    case ProxyKind::PenalizedMaxTargetProb: {
        add_prob_grad(g, p, t, 1.0);
        const std::size_t o = best_in(p, K, [&](std::size_t k) { return !contains(obj.targets, k); });
        if (o != K) add_prob_grad(g, p, o, -1.0);
        break;
    }
    case ProxyKind::UtilityWeightedProb:
        add_prob_grad(g, p, t, obj.weights[t]);
        break;
    case ProxyKind::NegTrueProb:
        add_prob_grad(g, p, t, -1.0);
        break;
    }
    return g;
}

Vector objective_gradient(const DenseNet& net, std::span<const double> x, const ProxyObjective& objective) {
    check_input(net, x);
    const Trace trace = run(net, x);
    const Vector g = objective_logit_gradient(objective, trace.acts.back());
    return std::move(pull_back(net, trace, g).input);
}

void sgd_step(DenseNet& net, const GradientBundle& grads, double lr, double momentum, SgdState& state) {
    auto& layers = net.layers_;
    if (grads.params.size() != layers.size()) throw InputError("gradient does not match network shape");
    if (state.velocity.empty())
        for (const auto& l : layers) state.velocity.push_back({Matrix(l.out_dim(), l.in_dim()), Vector(l.out_dim(), 0.0)});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        auto& v = state.velocity[i];
        const auto& g = grads.params[i];
        if (g.weights.data.size() != l.weights.data.size() || g.bias.size() != l.bias.size())
            throw InputError("gradient does not match network shape");
        for (std::size_t j = 0; j < l.weights.data.size(); ++j) {
            v.weights.data[j] = momentum * v.weights.data[j] + g.weights.data[j];
            l.weights.data[j] -= lr * v.weights.data[j];
        }
        for (std::size_t j = 0; j < l.bias.size(); ++j) {
            v.bias[j] = momentum * v.bias[j] + g.bias[j];
            l.bias[j] -= lr * v.bias[j];
        }
    }
}

std::string to_text(const DenseNet& net) {
    nlohmann::ordered_json doc;
    doc["input_dim"] = net.input_dim();
    doc["num_classes"] = net.num_classes();
    auto& layers = doc["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : net.layers()) {
        nlohmann::ordered_json j;
        j["rows"] = l.weights.rows;
        j["cols"] = l.weights.cols;
        j["activation"] = l.activation == Activation::Relu ? "relu" : "identity";
        j["weights"] = l.weights.data;
        j["biases"] = l.bias;
        layers.push_back(std::move(j));
    }
    return doc.dump(1);
}

DenseNet from_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("network document is not valid: ") + e.what());
    }
    try {
        std::vector<DenseLayer> layers;
        for (const auto& j : doc.at("layers")) {
            DenseLayer l;
            l.weights.rows = j.at("rows").get<std::size_t>();
            l.weights.cols = j.at("cols").get<std::size_t>();
            l.weights.data = j.at("weights").get<std::vector<double>>();
            l.bias = j.at("biases").get<std::vector<double>>();
            const auto act = j.at("activation").get<std::string>();
            if (act == "relu") l.activation = Activation::Relu;
            else if (act == "identity") l.activation = Activation::Identity;
            else throw InputError("unknown activation '" + act + "'");
            layers.push_back(std::move(l));
        }
        DenseNet net(std::move(layers));
        if (net.input_dim() != doc.at("input_dim").get<std::size_t>() ||
            net.num_classes() != doc.at("num_classes").get<std::size_t>())
            throw InputError("declared dimensions disagree with layer shapes");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("network document is missing fields: ") + e.what());
    }
}

void save(const DenseNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << to_text(net) << '\n';
}

DenseNet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

} // namespace stratrob::nn
