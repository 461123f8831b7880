#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "enfc/error.hpp"
#include "enfc/optim.hpp"

using namespace enfc;
using namespace enfc::ad;

TEST_CASE("adamw matches a hand-rolled reference for three steps") {
    ParameterStore store;
    store.add("w", Tensor::vector({1.0, -2.0}), "body");
    store.add("e", Tensor::vector({0.5}), "input");
    AdamWConfig cfg;
    cfg.group_lr = {{"input", 1e-4}, {"body", 1e-3}};
    AdamW opt(cfg);

    struct Ref {
        double theta, m = 0.0, v = 0.0;
    };
    std::vector<Ref> ref = {{1.0}, {-2.0}, {0.5}};
    const std::vector<double> lrs = {1e-3, 1e-3, 1e-4};
    const std::vector<std::vector<double>> gs = {{0.3, -1.0, 2.0}, {0.1, 0.5, -0.2}, {-0.4, 0.0, 1.0}};
    for (std::size_t t = 1; t <= 3; ++t) {
        const auto& g = gs[t - 1];
        opt.step(store, {{"w", Tensor::vector({g[0], g[1]})}, {"e", Tensor::vector({g[2]})}});
        for (std::size_t i = 0; i < 3; ++i) {
            auto& r = ref[i];
            r.theta *= 1.0 - lrs[i] * 0.01;
            r.m = 0.9 * r.m + 0.1 * g[i];
            r.v = 0.999 * r.v + 0.001 * g[i] * g[i];
            const double mh = r.m / (1.0 - std::pow(0.9, t));
            const double vh = r.v / (1.0 - std::pow(0.999, t));
            r.theta -= lrs[i] * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    CHECK(store.get("w")[0] == Catch::Approx(ref[0].theta).epsilon(1e-14));
    CHECK(store.get("w")[1] == Catch::Approx(ref[1].theta).epsilon(1e-14));
    CHECK(store.get("e")[0] == Catch::Approx(ref[2].theta).epsilon(1e-14));
}

TEST_CASE("rmsprop matches its update rule") {
    ParameterStore store;
    store.add("p", Tensor::vector({0.7}));
    RmsProp opt;
    double theta = 0.7;
    double v = 0.0;
    for (double g : {1.0, -0.5, 0.25, 2.0}) {
        opt.step(store, {{"p", Tensor::vector({g})}});
        v = 0.9 * v + 0.1 * g * g;
        theta -= 0.01 * g / std::sqrt(v + 1e-8);
        CHECK(store.get("p")[0] == Catch::Approx(theta).epsilon(1e-14));
        CHECK(opt.second_moment("p")[0] == Catch::Approx(v).epsilon(1e-14));
    }
}

TEST_CASE("optimizers minimize a quadratic") {
    for (int kind = 0; kind < 2; ++kind) {
        ParameterStore store;
        store.add("x", Tensor::vector({3.0, -4.0}));
        AdamWConfig acfg;
        acfg.lr = 0.05;
        acfg.weight_decay = 0.0;
        AdamW adam(acfg);
        RmsProp rms;
        for (int i = 0; i < 3000; ++i) {
            const auto& x = store.get("x");
            Gradients g = {{"x", Tensor::vector({2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)})}};
            if (kind == 0) adam.step(store, g);
            else rms.step(store, g);
        }
        INFO("kind = " << kind);
        CHECK(store.get("x")[0] == Catch::Approx(1.0).margin(2e-2));
        CHECK(store.get("x")[1] == Catch::Approx(-0.5).margin(2e-2));
    }
}

TEST_CASE("parameters without gradients are untouched and shapes are checked") {
    ParameterStore store;
    store.add("a", Tensor::vector({1.0}));
    store.add("b", Tensor::vector({1.0, 2.0}));
    AdamW opt;
    opt.step(store, {{"a", Tensor::vector({1.0})}});
    CHECK(store.get("b") == Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(opt.step(store, {{"b", Tensor::vector({1.0})}}), StructuralError);
}

TEST_CASE("single adamw step with unit gradient moves by the learning rate") {
    ParameterStore store;
    store.add("p", Tensor::vector({0.5}));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(store, {{"p", Tensor::vector({1.0})}});
    CHECK(store.get("p")[0] == Catch::Approx(0.5 - 0.1).epsilon(1e-7));

    ParameterStore still;
    still.add("p", Tensor::vector({0.5}));
    AdamW zero(cfg);
    zero.step(still, {{"p", Tensor::vector({0.0})}});
    CHECK(still.get("p")[0] == 0.5);
    RmsProp rms;
    rms.step(still, {{"p", Tensor::vector({0.0})}});
    CHECK(still.get("p")[0] == 0.5);
}

TEST_CASE("rmsprop converges on a one-dimensional quadratic") {
    ParameterStore store;
    store.add("t", Tensor::vector({2.0}));
    RmsPropConfig cfg;
    cfg.lr = 0.01;
    RmsProp opt(cfg);
    int steps = 0;
    for (; steps < 2000 && std::fabs(store.get("t")[0] - 0.7) >= 1e-3; ++steps) {
        opt.step(store, {{"t", Tensor::vector({2.0 * (store.get("t")[0] - 0.7)})}});
    }
    CHECK(std::fabs(store.get("t")[0] - 0.7) < 1e-3);
    CHECK(steps <= 2000);
}
