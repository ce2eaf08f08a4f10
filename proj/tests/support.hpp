#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stratrob/nn.hpp"
#include "stratrob/rng.hpp"

namespace testsupport {

using stratrob::Rng;
using stratrob::nn::DenseNet;
using stratrob::nn::Vector;

inline DenseNet random_net(Rng& rng, std::size_t d, std::size_t K, std::size_t hidden_layers, std::size_t max_width) {
    std::vector<std::size_t> widths{d};
    for (std::size_t h = 0; h < hidden_layers; ++h) widths.push_back(1 + rng.uniform_int(max_width));
    widths.push_back(K);
    DenseNet net = DenseNet::random(widths, rng.next_u64());
    // Non-zero biases so the bias gradients are exercised away from the init.
    Vector p = net.parameters();
    for (auto& v : p) v += rng.uniform(-0.3, 0.3);
    net.set_parameters(p);
    return net;
}

inline Vector random_point(Rng& rng, std::size_t d, double scale = 1.0) {
    Vector x(d);
    for (auto& v : x) v = rng.uniform(-scale, scale);
    return x;
}

// Smallest |pre-activation| over relu units; finite differences are only
// meaningful away from the kinks.
inline double kink_distance(const DenseNet& net, const Vector& x) {
    double closest = INFINITY;
    Vector a = x;
    for (const auto& layer : net.layers()) {
        Vector z(layer.out_dim());
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            double s = layer.bias[r];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) s += layer.weights(r, c) * a[c];
            z[r] = s;
            if (layer.activation == stratrob::nn::Activation::Relu) closest = std::min(closest, std::abs(s));
        }
        if (layer.activation == stratrob::nn::Activation::Relu)
            for (auto& v : z) v = std::max(v, 0.0);
        a = std::move(z);
    }
    return closest;
}

// Relative error with a floor so entries that are zero up to rounding are not
// judged against a vanishing denominator.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of f along coordinate i of v.
template <typename F>
double central_difference(F&& f, Vector v, std::size_t i, double h = 1e-5) {
    const double orig = v[i];
    v[i] = orig + h;
    const double up = f(v);
    v[i] = orig - h;
    const double down = f(v);
    return (up - down) / (2.0 * h);
}

struct GradientCheck {
    std::size_t entries = 0;
    double worst = 0.0;
    void add(double analytic, double numeric) {
        ++entries;
        worst = std::max(worst, relative_error(analytic, numeric));
    }
};

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("stratrob_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testsupport
