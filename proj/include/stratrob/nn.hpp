#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stratrob::nn {

using Vector = std::vector<double>;

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Matrix identity(std::size_t n);

    bool operator==(const Matrix&) const = default;
};

enum class Activation { Relu, Identity };

struct GradientBundle;
struct SgdState;

struct DenseLayer {
    Matrix weights; // out_dim x in_dim
    Vector bias;    // out_dim
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }

    bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward classifier: affine layers with relu or identity activations,
/// the last one producing K raw logits.
class DenseNet {
public:
    /// Validates dimension chaining, identity output activation and finiteness.
    explicit DenseNet(std::vector<DenseLayer> layers);

    /// widths = {d, hidden..., K}; hidden layers use relu. Weights are
    /// uniform in [-s, s] with s = sqrt(6 / (in + out)); biases start at zero.
    static DenseNet random(std::span<const std::size_t> widths, std::uint64_t seed);

    /// Single affine layer producing logits W x + b.
    static DenseNet linear(Matrix weights, Vector bias);

    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t num_classes() const { return layers_.back().out_dim(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::size_t parameter_count() const;
    /// Flattened parameters: per layer, weights row-major then biases.
    Vector parameters() const;
    void set_parameters(std::span<const double> flat);

    bool operator==(const DenseNet&) const = default;

private:
    friend void sgd_step(DenseNet&, const GradientBundle&, double, double, SgdState&);

    std::vector<DenseLayer> layers_;
};

struct LayerGrad {
    Matrix weights;
    Vector bias;
};

/// Gradients mirroring a DenseNet's parameters plus the gradient w.r.t. the input.
struct GradientBundle {
    std::vector<LayerGrad> params;
    Vector input;

    static GradientBundle zeros_like(const DenseNet& net);
    /// Same layout as DenseNet::parameters().
    Vector flat_params() const;
    void accumulate(const GradientBundle& other, double scale = 1.0);
};

Vector forward(const DenseNet& net, std::span<const double> x);

/// Index of the largest entry; exact ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

std::size_t predict(const DenseNet& net, std::span<const double> x);

/// Max-subtracted softmax.
Vector softmax(std::span<const double> logits);

/// -log softmax(logits)[y], computed via log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t y);

struct LossAndGrads {
    double loss = 0.0;
    GradientBundle grads;
};

/// Cross-entropy at (x, y) with exact gradients for every parameter and for x.
LossAndGrads backward(const DenseNet& net, std::span<const double> x, std::size_t y);

/// Vector-Jacobian product: pulls a gradient w.r.t. the logits back through the
/// net, filling both parameter and input gradients. relu'(0) is taken as 0.
GradientBundle backward_from_logits(const DenseNet& net, std::span<const double> x,
                                    std::span<const double> logit_grad);

/// Differentiable surrogates for an opponent's response, all expressed over
/// class probabilities p = softmax(f(x)).
enum class ProxyKind {
    MaxTargetProb,          // max_{t in T} p_t
    PenalizedMaxTargetProb, // max_{t in T} p_t - max_{t not in T} p_t
    UtilityWeightedProb,    // max_t w_t p_t
    NegTrueProb,            // -p_y (untargeted: push the true class down)
};

struct ProxyObjective {
    ProxyKind kind = ProxyKind::MaxTargetProb;
    std::vector<std::size_t> targets; // T, or {y} for NegTrueProb
    Vector weights;                   // per-class weights for UtilityWeightedProb

    static ProxyObjective max_prob(std::vector<std::size_t> targets);
    static ProxyObjective penalized(std::vector<std::size_t> targets);
    static ProxyObjective weighted(Vector weights);
    static ProxyObjective neg_true_prob(std::size_t y);
};

/// The class whose probability the objective currently differentiates through
/// (argmax over T, or over w_t p_t); lowest index on ties.
std::size_t active_target(const ProxyObjective& objective, std::span<const double> logits);

double objective_value(const ProxyObjective& objective, std::span<const double> logits);

/// Gradient of the objective w.r.t. the logits, with inner maxima fixed at
/// their current argmax.
Vector objective_logit_gradient(const ProxyObjective& objective, std::span<const double> logits);

/// Gradient of the objective w.r.t. the input x.
Vector objective_gradient(const DenseNet& net, std::span<const double> x, const ProxyObjective& objective);

/// Momentum buffers; sized on first use.
struct SgdState {
    std::vector<LayerGrad> velocity;
};

/// v <- momentum * v + g;  theta <- theta - lr * v.
void sgd_step(DenseNet& net, const GradientBundle& grads, double lr, double momentum, SgdState& state);

/// Structured text form; doubles are written in shortest round-trip form.
std::string to_text(const DenseNet& net);
DenseNet from_text(const std::string& text);
void save(const DenseNet& net, const std::string& path);
DenseNet load(const std::string& path);

} // namespace stratrob::nn
