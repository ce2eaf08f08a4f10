#include "doctest.h"

#include <cmath>

#include "gradient_suite.hpp"
#include "stratrob/error.hpp"
#include "stratrob/nn.hpp"

using namespace stratrob;
using namespace stratrob::nn;

namespace {

DenseNet identity_net(double sign) {
    Matrix w = Matrix::identity(2);
    for (auto& v : w.data) v *= sign;
    return DenseNet::linear(w, {0.0, 0.0});
}

} // namespace

TEST_CASE("forward through identity layers") {
    const Vector x{3.0, 1.0};
    CHECK(forward(identity_net(1.0), x) == Vector{3.0, 1.0});
    CHECK(predict(identity_net(1.0), x) == 0);
    CHECK(forward(identity_net(-1.0), x) == Vector{-3.0, -1.0});
    CHECK(predict(identity_net(-1.0), x) == 1);
}

TEST_CASE("forward at the origin follows the bias path") {
    DenseNet net = DenseNet::random(std::vector<std::size_t>{3, 4, 2}, 0);
    Vector p = net.parameters();
    // Layer 1: 12 weights then biases (0.5, -0.25, 1, 0); layer 2: 8 weights then (0.1, -0.2).
    const Vector b1{0.5, -0.25, 1.0, 0.0};
    for (std::size_t i = 0; i < 4; ++i) p[12 + i] = b1[i];
    p[12 + 4 + 8] = 0.1;
    p[12 + 4 + 8 + 1] = -0.2;
    net.set_parameters(p);

    const auto& W2 = net.layers()[1].weights;
    Vector expected(2);
    for (std::size_t r = 0; r < 2; ++r) {
        expected[r] = r == 0 ? 0.1 : -0.2;
        for (std::size_t c = 0; c < 4; ++c) expected[r] += W2(r, c) * std::max(b1[c], 0.0);
    }
    const Vector logits = forward(net, Vector{0.0, 0.0, 0.0});
    CHECK(logits[0] == doctest::Approx(expected[0]).epsilon(1e-15));
    CHECK(logits[1] == doctest::Approx(expected[1]).epsilon(1e-15));
}

TEST_CASE("forward rejects bad inputs") {
    const auto net = identity_net(1.0);
    CHECK_THROWS_AS(forward(net, Vector{1.0}), InputError);
    CHECK_THROWS_AS(forward(net, Vector{1.0, NAN}), InputError);
}

TEST_CASE("argmax breaks exact ties toward the lowest index") {
    CHECK(argmax(Vector{1.0, 3.0, 3.0}) == 1);
    CHECK(argmax(Vector{2.0, 2.0}) == 0);
    CHECK(predict(identity_net(1.0), Vector{0.5, 0.5}) == 0);
}

TEST_CASE("softmax values and stability") {
    const Vector u = softmax(Vector{0.0, 0.0, 0.0});
    for (double v : u) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const Vector two = softmax(Vector{std::log(2.0), 0.0});
    CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    const Vector big = softmax(Vector{1000.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] < 1e-300);
}

TEST_CASE("softmax sums to one and is shift invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Vector z = testsupport::random_point(rng, 2 + rng.uniform_int(8), 20.0);
        const Vector p = softmax(z);
        double s = 0.0;
        for (double v : p) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
        const double c = rng.uniform(-50.0, 50.0);
        for (auto& v : z) v += c;
        const Vector q = softmax(z);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
}

TEST_CASE("cross-entropy values") {
    CHECK(cross_entropy(Vector(10, 0.0), 3) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(cross_entropy(Vector{std::log(2.0), 0.0}, 1) == doctest::Approx(1.098612).epsilon(1e-6));
    CHECK(cross_entropy(Vector{60.0, 0.0, 0.0}, 0) < 1e-20);
    CHECK(cross_entropy(Vector{60.0, 0.0, 0.0}, 0) >= 0.0);
    CHECK_THROWS_AS(cross_entropy(Vector{0.0, 0.0}, 2), InputError);
}

TEST_CASE("linear layer input gradient has the closed form") {
    Rng rng(5);
    Matrix W(3, 4);
    for (auto& v : W.data) v = rng.uniform(-1.0, 1.0);
    const Vector b{0.1, -0.3, 0.2};
    const auto net = DenseNet::linear(W, b);
    const Vector x{0.5, -1.0, 2.0, 0.25};
    const auto lg = backward(net, x, 2);
    Vector p = softmax(forward(net, x));
    p[2] -= 1.0;
    for (std::size_t c = 0; c < 4; ++c) {
        double expected = 0.0;
        for (std::size_t r = 0; r < 3; ++r) expected += W(r, c) * p[r];
        CHECK(lg.grads.input[c] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("zero-weight net has zero input gradient") {
    auto net = DenseNet::random(std::vector<std::size_t>{4, 5, 3}, 1);
    net.set_parameters(Vector(net.parameter_count(), 0.0));
    const auto lg = backward(net, Vector{1.0, 2.0, 3.0, 4.0}, 1);
    for (double g : lg.grads.input) CHECK(g == 0.0);
    CHECK(lg.loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("gradients match central finite differences") {
    const auto check = testsupport::run_gradient_suite(40, 2024);
    CHECK(check.entries > 1000);
    CHECK(check.worst < 1e-4);
}

TEST_CASE("single-target proxy gradient is the gradient of that class probability") {
    Rng rng(9);
    const auto net = testsupport::random_net(rng, 4, 3, 1, 6);
    const Vector x = testsupport::random_point(rng, 4);
    const Vector g = objective_gradient(net, x, ProxyObjective::max_prob({2}));
    auto p2 = [&](const Vector& v) { return softmax(forward(net, v))[2]; };
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(testsupport::relative_error(g[i], testsupport::central_difference(p2, x, i)) < 1e-6);
}

TEST_CASE("proxy tie on symmetric logits resolves to the lowest index") {
    // Zero weights and biases: every class has probability 1/K.
    auto net = DenseNet::random(std::vector<std::size_t>{2, 3, 4}, 3);
    Vector p = net.parameters();
    for (auto& v : p) v = 0.0;
    net.set_parameters(p);
    const Vector logits = forward(net, Vector{0.3, -0.2});
    const auto obj = ProxyObjective::max_prob({0, 2, 3});
    CHECK(active_target(obj, logits) == 0);
    const auto pen = ProxyObjective::penalized({0, 2, 3});
    CHECK(active_target(pen, logits) == 0);
    // Complement of a singleton: max over the others minus p_y.
    CHECK(objective_value(pen, logits) == doctest::Approx(0.0));
    const Vector lg = objective_logit_gradient(pen, logits);
    const Vector lg0 = objective_logit_gradient(ProxyObjective::max_prob({0}), logits);
    const Vector lg1 = objective_logit_gradient(ProxyObjective::max_prob({1}), logits);
    for (std::size_t i = 0; i < 4; ++i) CHECK(lg[i] == doctest::Approx(lg0[i] - lg1[i]));
}

TEST_CASE("empty proxy target set is rejected") {
    const auto net = identity_net(1.0);
    CHECK_THROWS_AS(objective_gradient(net, Vector{0.0, 0.0}, ProxyObjective::max_prob({})), InputError);
}

TEST_CASE("sgd step arithmetic") {
    auto net = DenseNet::random(std::vector<std::size_t>{2, 2}, 4);
    const Vector p0 = net.parameters();
    auto g = GradientBundle::zeros_like(net);
    g.params[0].weights(0, 1) = 2.0;
    g.params[0].bias[1] = -1.0;

    SUBCASE("plain step") {
        SgdState st;
        sgd_step(net, g, 0.1, 0.0, st);
        const Vector p1 = net.parameters();
        CHECK(p1[1] == doctest::Approx(p0[1] - 0.2));
        CHECK(p1[5] == doctest::Approx(p0[5] + 0.1));
        CHECK(p1[0] == p0[0]);
    }
    SUBCASE("momentum recurrence") {
        SgdState st;
        sgd_step(net, g, 0.1, 0.9, st);
        const double first = net.parameters()[1];
        sgd_step(net, g, 0.1, 0.9, st);
        CHECK(first - net.parameters()[1] == doctest::Approx(0.1 * 2.0 * 1.9));
    }
    SUBCASE("zero gradient") {
        SgdState st;
        sgd_step(net, GradientBundle::zeros_like(net), 0.5, 0.9, st);
        CHECK(net.parameters() == p0);
    }
}

TEST_CASE("network text round trip is exact") {
    Rng rng(21);
    const auto net = testsupport::random_net(rng, 5, 4, 2, 7);
    const auto back = from_text(to_text(net));
    CHECK(back == net);
    const Vector x = testsupport::random_point(rng, 5);
    CHECK(forward(back, x) == forward(net, x));
    CHECK_THROWS_AS(from_text("{\"input_dim\": 2}"), InputError);
    CHECK_THROWS_AS(from_text("not json"), InputError);
}

TEST_CASE("network constructor validates shapes") {
    DenseLayer a{Matrix(3, 2), Vector(3), Activation::Relu};
    DenseLayer b{Matrix(2, 4), Vector(2), Activation::Identity};
    CHECK_THROWS_AS(DenseNet({a, b}), InputError);
    DenseLayer c{Matrix(2, 3), Vector(2), Activation::Relu};
    CHECK_THROWS_AS(DenseNet({a, c}), InputError);
}

TEST_CASE("forward is deterministic") {
    Rng rng(8);
    const auto net = testsupport::random_net(rng, 6, 5, 2, 8);
    const Vector x = testsupport::random_point(rng, 6);
    CHECK(forward(net, x) == forward(net, x));
}
