#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "enfc/autograd.hpp"
#include "enfc/error.hpp"
#include "fd_check.hpp"

using namespace enfc;
using namespace enfc::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = scale * rng.normal();
    return t;
}

// Weighted sum with fixed random weights so every output element matters.
NodeId project_to_scalar(Graph& g, NodeId x, std::uint64_t seed) {
    Rng rng(seed);
    const Shape s = g.shape(x);
    Tensor w(s);
    for (auto& v : w.values()) v = rng.normal();
    const NodeId flat = reshape(g, x, Shape{1, shape_size(s)});
    const NodeId wn = g.constant(w.reshaped(Shape{shape_size(s), 1}));
    const NodeId zero = g.constant(Tensor(Shape{1}, 0.0));
    return sum(g, linear(g, flat, wn, zero));
}

using Builder = std::function<NodeId(Graph&)>;

double check_op(ParameterStore& store, const Builder& build) {
    auto loss = [&](ParameterStore& s, Gradients* grads) {
        Graph g(&s, Mode::Eval);
        const NodeId out = build(g);
        const NodeId l = project_to_scalar(g, out, 77);
        if (grads) {
            g.backward(l);
            *grads = g.parameter_gradients();
        }
        return g.value(l).item();
    };
    const auto report = testing::fd_check(store, loss);
    INFO(report.where);
    CHECK(report.worst_rel <= 1e-5);
    return report.worst_rel;
}

}  // namespace

TEST_CASE("finite-difference check: elementwise ops") {
    Rng rng(1);
    ParameterStore store;
    store.add("a", random_tensor({3, 4}, rng));
    store.add("b", random_tensor({3, 4}, rng));
    check_op(store, [](Graph& g) { return add(g, g.parameter("a"), g.parameter("b")); });
    check_op(store, [](Graph& g) { return exp(g, g.parameter("a")); });
    check_op(store, [](Graph& g) { return leaky_relu(g, g.parameter("a")); });
    check_op(store, [](Graph& g) { return reshape(g, g.parameter("a"), Shape{2, 6}); });
    check_op(store, [](Graph& g) { return select_column(g, g.parameter("a"), 2); });
    check_op(store, [](Graph& g) { return mean(g, g.parameter("a")); });
    check_op(store, [](Graph& g) { return sum(g, g.parameter("b")); });
}

TEST_CASE("finite-difference check: linear, stack, layer norm") {
    Rng rng(2);
    ParameterStore store;
    store.add("x", random_tensor({5, 3}, rng));
    store.add("y", random_tensor({5, 3}, rng));
    store.add("w", random_tensor({3, 4}, rng));
    store.add("b", random_tensor({4}, rng));
    store.add("gain", random_tensor({3}, rng));
    store.add("shift", random_tensor({3}, rng));
    check_op(store, [](Graph& g) { return linear(g, g.parameter("x"), g.parameter("w"), g.parameter("b")); });
    check_op(store, [](Graph& g) { return stack(g, {g.parameter("x"), g.parameter("y")}); });
    check_op(store, [](Graph& g) {
        const NodeId s = stack(g, {g.parameter("x"), g.parameter("y")});
        return linear(g, s, g.parameter("w"), g.parameter("b"));
    });
    check_op(store, [](Graph& g) {
        return layer_norm(g, g.parameter("x"), g.parameter("gain"), g.parameter("shift"));
    });
}

TEST_CASE("finite-difference check: attention") {
    Rng rng(3);
    const std::size_t d = 8;
    ParameterStore store;
    store.add("q", random_tensor({2, 1, d}, rng));
    store.add("kv", random_tensor({2, 3, d}, rng));
    for (const char* n : {"wq", "wk", "wv", "wo"}) store.add(n, random_tensor({d, d}, rng, 0.4));
    for (const char* n : {"bq", "bk", "bv", "bo"}) store.add(n, random_tensor({d}, rng, 0.1));
    check_op(store, [](Graph& g) {
        const NodeId kv = g.parameter("kv");
        return scaled_dot_product_attention(g, g.parameter("q"), kv, kv, 2);
    });
    check_op(store, [](Graph& g) {
        AttentionWeights w{g.parameter("wq"), g.parameter("bq"), g.parameter("wk"), g.parameter("bk"),
                           g.parameter("wv"), g.parameter("bv"), g.parameter("wo"), g.parameter("bo")};
        return multi_head_attention(g, g.parameter("q"), g.parameter("kv"), w, 4);
    });
}

TEST_CASE("attention weights are a softmax over keys") {
    Rng rng(4);
    ParameterStore store;
    store.add("q", random_tensor({3, 2, 8}, rng, 3.0));
    store.add("kv", random_tensor({3, 5, 8}, rng, 3.0));
    Graph g(&store);
    Tensor weights;
    const NodeId kv = g.parameter("kv");
    scaled_dot_product_attention(g, g.parameter("q"), kv, kv, 4, &weights);
    REQUIRE(weights.shape() == Shape{3, 4, 2, 5});
    for (std::size_t r = 0; r < weights.rows(); ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            const double w = weights[r * 5 + j];
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(std::fabs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("finite-difference check: losses") {
    Rng rng(5);
    ParameterStore store;
    store.add("pred", random_tensor({6}, rng));
    store.add("shape", random_tensor({6}, rng, 0.5));
    store.add("rate", random_tensor({6}, rng, 0.5));
    const std::vector<double> counts = {0.0, 3.0, 10.0, 120.0, 7.0, 1.0};
    const std::vector<double> positive = {0.5, 3.0, 10.0, 1.2, 7.0, 0.1};
    std::vector<std::vector<double>> groups = {{0.5, 1.0}, {3.0}, {2.0, 4.0, 6.0}, {1.2}, {7.0, 0.3}, {0.1}};

    auto run = [&](auto build) {
        auto loss = [&](ParameterStore& s, Gradients* grads) {
            Graph g(&s);
            const NodeId l = build(g);
            if (grads) {
                g.backward(l);
                *grads = g.parameter_gradients();
            }
            return g.value(l).item();
        };
        const auto report = testing::fd_check(store, loss);
        INFO(report.where);
        CHECK(report.worst_rel <= 1e-5);
    };
    run([&](Graph& g) { return l1_log_loss(g, g.parameter("pred"), counts); });
    run([&](Graph& g) { return gamma_nll_loss(g, g.parameter("shape"), g.parameter("rate"), positive); });
    run([&](Graph& g) { return gamma_nll_grouped(g, g.parameter("shape"), g.parameter("rate"), groups); });
}

TEST_CASE("gamma nll at unit parameters") {
    ParameterStore store;
    store.add("shape", Tensor::vector({0.0}));
    store.add("rate", Tensor::vector({0.0}));
    Graph g(&store);
    const NodeId l = gamma_nll_loss(g, g.parameter("shape"), g.parameter("rate"), {1.0});
    g.backward(l);
    // -ln(e^{-1}) = 1; d/d(shape logit) = α(ψ(α) - ln λ - ln x) = ψ(1).
    CHECK(g.value(l).item() == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(g.grad(g.parameter("shape"))[0] == Catch::Approx(-0.5772156649015329).epsilon(1e-12));
    CHECK(g.grad(g.parameter("rate"))[0] == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("gamma nll rejects non-positive targets") {
    ParameterStore store;
    store.add("s", Tensor::vector({0.0}));
    Graph g(&store);
    CHECK_THROWS_AS(gamma_nll_loss(g, g.parameter("s"), g.parameter("s"), {0.0}), DomainError);
}

TEST_CASE("dropout keeps the expectation") {
    ParameterStore store;
    store.add("x", Tensor(Shape{100'000}, 1.0));
    Graph g(&store, Mode::Train, 17);
    const NodeId y = dropout(g, g.parameter("x"), 0.3);
    double total = 0.0;
    std::size_t zeros = 0;
    for (double v : g.value(y).values()) {
        total += v;
        zeros += v == 0.0;
    }
    CHECK(std::fabs(total / 100'000.0 - 1.0) <= 0.01);
    CHECK(std::fabs(static_cast<double>(zeros) / 100'000.0 - 0.3) <= 0.01);

    Graph eval(&store, Mode::Eval);
    const NodeId z = dropout(eval, eval.parameter("x"), 0.3);
    CHECK(eval.value(z) == store.get("x"));
}

TEST_CASE("dropout gradient follows the mask") {
    ParameterStore store;
    store.add("x", Tensor(Shape{1000}, 2.0));
    Graph g(&store, Mode::Train, 3);
    const NodeId y = dropout(g, g.parameter("x"), 0.5);
    g.backward(sum(g, y));
    const Tensor& out = g.value(y);
    const Tensor grad = g.grad(g.parameter("x"));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(grad[i] == (out[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("structural errors") {
    ParameterStore store;
    store.add("m", Tensor(Shape{2, 3}, 1.0));
    store.add("w", Tensor(Shape{4, 2}, 1.0));
    store.add("b", Tensor(Shape{2}, 0.0));
    Graph g(&store);
    CHECK_THROWS_AS(g.backward(g.parameter("m")), StructuralError);
    CHECK_THROWS_AS(linear(g, g.parameter("m"), g.parameter("w"), g.parameter("b")), StructuralError);
    CHECK_THROWS_AS(reshape(g, g.parameter("m"), Shape{5}), StructuralError);
    CHECK_THROWS_AS(g.parameter("missing"), StructuralError);
    CHECK_THROWS_AS(store.add("m", Tensor(Shape{1})), StructuralError);
}

TEST_CASE("unreached nodes have zero gradient") {
    ParameterStore store;
    store.add("a", Tensor::vector({1.0, 2.0}));
    store.add("b", Tensor::vector({3.0}));
    Graph g(&store);
    const NodeId b = g.parameter("b");
    g.backward(sum(g, g.parameter("a")));
    CHECK(g.grad(b)[0] == 0.0);
}

TEST_CASE("forward examples") {
    ParameterStore store;
    store.add("x", Tensor::matrix({{-1.0, 2.0}}));
    store.add("eye", Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    store.add("zero", Tensor::vector({0.0, 0.0}));
    Graph g(&store);
    const NodeId x = g.parameter("x");
    const Tensor mapped = g.value(linear(g, x, g.parameter("eye"), g.parameter("zero")));
    CHECK(mapped == g.value(x));
    const Tensor twice = g.value(leaky_relu(g, leaky_relu(g, x)));
    CHECK(twice[0] == Catch::Approx(-1e-4).epsilon(1e-12));
    CHECK(twice[1] == 2.0);
}

TEST_CASE("layer norm examples") {
    ParameterStore store;
    store.add("x", Tensor::matrix({{1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}}));
    store.add("gain", Tensor::vector({1.0, 1.0, 1.0}));
    store.add("bias", Tensor::vector({0.0, 0.0, 0.0}));
    Rng rng(8);
    store.add("r", random_tensor({1, 257}, rng, 4.0));
    store.add("gain_r", Tensor(Shape{257}, 1.0));
    store.add("bias_r", Tensor(Shape{257}, 0.0));
    Graph g(&store);
    const Tensor y = g.value(layer_norm(g, g.parameter("x"), g.parameter("gain"), g.parameter("bias")));
    CHECK(y[0] == Catch::Approx(-1.2247).margin(1e-3));
    CHECK(y[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(y[2] == Catch::Approx(1.2247).margin(1e-3));
    for (std::size_t i = 3; i < 6; ++i) CHECK(y[i] == 0.0);

    const Tensor z = g.value(layer_norm(g, g.parameter("r"), g.parameter("gain_r"), g.parameter("bias_r")));
    double m = 0.0;
    for (double v : z.values()) m += v / 257.0;
    double var = 0.0;
    for (double v : z.values()) var += (v - m) * (v - m) / 257.0;
    CHECK(std::fabs(m) <= 1e-9);
    CHECK(std::fabs(var - 1.0) <= 1e-3);
}

TEST_CASE("attention with identical keys returns the value row") {
    ParameterStore store;
    store.add("q", Tensor(Shape{1, 1, 4}, std::vector<double>{0.3, -1.0, 2.0, 0.5}));
    store.add("kv", Tensor(Shape{1, 2, 4}, std::vector<double>{1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0}));
    Graph g(&store);
    const NodeId kv = g.parameter("kv");
    const Tensor out = g.value(scaled_dot_product_attention(g, g.parameter("q"), kv, kv, 1));
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == Catch::Approx(1.0 + i).epsilon(1e-14));
}

TEST_CASE("attention matches a hand computation with D = 2") {
    const std::vector<double> q = {1.0, 0.5};
    const std::vector<double> k0 = {0.2, -0.4};
    const std::vector<double> k1 = {1.5, 0.3};
    ParameterStore store;
    store.add("q", Tensor(Shape{1, 1, 2}, q));
    store.add("kv", Tensor(Shape{1, 2, 2}, std::vector<double>{k0[0], k0[1], k1[0], k1[1]}));
    for (const char* n : {"wq", "wk", "wv", "wo"}) store.add(n, Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    for (const char* n : {"bq", "bk", "bv", "bo"}) store.add(n, Tensor::vector({0.0, 0.0}));
    Graph g(&store);
    AttentionWeights w{g.parameter("wq"), g.parameter("bq"), g.parameter("wk"), g.parameter("bk"),
                       g.parameter("wv"), g.parameter("bv"), g.parameter("wo"), g.parameter("bo")};
    const Tensor out = g.value(multi_head_attention(g, g.parameter("q"), g.parameter("kv"), w, 1));
    const double s0 = (q[0] * k0[0] + q[1] * k0[1]) / std::sqrt(2.0);
    const double s1 = (q[0] * k1[0] + q[1] * k1[1]) / std::sqrt(2.0);
    const double a0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    const double a1 = 1.0 - a0;
    CHECK(out[0] == Catch::Approx(a0 * k0[0] + a1 * k1[0]).epsilon(1e-13));
    CHECK(out[1] == Catch::Approx(a0 * k0[1] + a1 * k1[1]).epsilon(1e-13));
}

TEST_CASE("attention rejects width not divisible by heads") {
    ParameterStore store;
    store.add("q", Tensor(Shape{1, 1, 6}, 1.0));
    store.add("kv", Tensor(Shape{1, 2, 6}, 1.0));
    Graph g(&store);
    const NodeId kv = g.parameter("kv");
    CHECK_THROWS_AS(scaled_dot_product_attention(g, g.parameter("q"), kv, kv, 4), StructuralError);
}

TEST_CASE("loss examples") {
    ParameterStore store;
    store.add("p", Tensor::vector({0.0, std::log(3.0)}));
    store.add("s", Tensor::vector({0.0}));
    store.add("r", Tensor::vector({std::log(2.0)}));
    Graph g(&store);
    CHECK(g.value(l1_log_loss(g, g.parameter("p"), {std::exp(1.0) - 1.0, 2.0})).item() ==
          Catch::Approx(0.5).epsilon(1e-14));
    CHECK(g.value(l1_log_loss(g, g.parameter("p"), {0.0, std::exp(2.0 + std::log(3.0)) - 1.0})).item() ==
          Catch::Approx(1.0).epsilon(1e-12));
    CHECK(g.value(gamma_nll_loss(g, g.parameter("s"), g.parameter("r"), {1.0})).item() ==
          Catch::Approx(2.0 - std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(l1_log_loss(g, g.parameter("p"), {1.0, std::nan("")}), NumericError);
}

TEST_CASE("forward is bitwise deterministic for a fixed seed") {
    Rng rng(12);
    ParameterStore store;
    store.add("x", random_tensor({8, 16}, rng));
    auto run = [&] {
        Graph g(&store, Mode::Train, 99);
        return g.value(dropout(g, g.parameter("x"), 0.3));
    };
    CHECK(run() == run());
}
