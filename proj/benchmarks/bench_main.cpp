#include <benchmark/benchmark.h>

#include <numeric>

#include "enfc/filterfit.hpp"
#include "enfc/models.hpp"
#include "enfc/randdist.hpp"
#include "enfc/specfun.hpp"
#include "enfc/synthetic.hpp"

using namespace enfc;

static void BM_LnGamma(benchmark::State& state) {
    double x = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(specfun::ln_gamma(x));
        x = x < 50.0 ? x + 0.37 : 0.5;
    }
}
BENCHMARK(BM_LnGamma);

static void BM_GammaQuantile(benchmark::State& state) {
    const auto g = make_gamma(2.5, 1.3);
    double p = 0.01;
    for (auto _ : state) {
        benchmark::DoNotOptimize(gamma_quantile(g, p));
        p = p < 0.98 ? p + 0.013 : 0.01;
    }
}
BENCHMARK(BM_GammaQuantile);

static void BM_Normal(benchmark::State& state) {
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(rng.normal());
}
BENCHMARK(BM_Normal);

static void BM_GammaSample(benchmark::State& state) {
    Rng rng(2);
    const auto g = make_gamma(static_cast<double>(state.range(0)) / 10.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(gamma_sample(g, rng));
}
BENCHMARK(BM_GammaSample)->Arg(5)->Arg(18)->Arg(200);

static void BM_PoissonSample(benchmark::State& state) {
    Rng rng(3);
    const double rate = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(poisson_sample(rate, rng));
}
BENCHMARK(BM_PoissonSample)->Arg(3)->Arg(20)->Arg(100);

static void BM_EstimateDuration(benchmark::State& state) {
    SimSpec spec;
    spec.n_sites = state.range(0);
    spec.target = 10 * state.range(0);
    spec.rate_dist = make_gamma(1.8, 3.0);
    spec.startup_dist = make_gamma(2.5, 0.8);
    for (auto _ : state) benchmark::DoNotOptimize(estimate_duration(spec, 1024, 7));
}
BENCHMARK(BM_EstimateDuration)->Arg(15)->Arg(60)->Unit(benchmark::kMillisecond);

static void BM_FitGammaGradient(benchmark::State& state) {
    Rng rng(4);
    std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
    for (auto& x : xs) x = gamma_sample(make_gamma(1.8, 3.0), rng) + 1e-6;
    for (auto _ : state) benchmark::DoNotOptimize(fit_gamma_gradient(xs));
}
BENCHMARK(BM_FitGammaGradient)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_FitGammaNewton(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> xs(1000);
    for (auto& x : xs) x = gamma_sample(make_gamma(1.8, 3.0), rng) + 1e-6;
    for (auto _ : state) benchmark::DoNotOptimize(fit_gamma_newton(xs));
}
BENCHMARK(BM_FitGammaNewton);

static void BM_ModelForward(benchmark::State& state) {
    SyntheticConfig cfg;
    cfg.n_trials = static_cast<std::size_t>(state.range(0));
    cfg.seed = 6;
    const auto data = generate_synthetic(cfg);
    ModelCheckpoint m;
    m.head = HeadKind::Gamma;
    m.encoder = Encoder::fit(data.trials);
    m.backbone.d_emb = data.embeddings.dim;
    m.backbone.d_cat = m.encoder.cat_width();
    Rng rng(7);
    init_parameters(m.weights, m.backbone, m.head, rng);
    const auto x = m.encoder.encode_batch(data.trials, data.embeddings);
    for (auto _ : state) benchmark::DoNotOptimize(predict_distribution(m, x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(256)->Unit(benchmark::kMicrosecond);

static void BM_TrainEpoch(benchmark::State& state) {
    SyntheticConfig cfg;
    cfg.n_trials = 512;
    cfg.seed = 8;
    const auto data = generate_synthetic(cfg);
    const Encoder enc = Encoder::fit(data.trials);
    TrainingSet set;
    set.x = enc.encode_batch(data.trials, data.embeddings);
    for (const auto& t : data.trials) set.enrollment.push_back(static_cast<double>(*t.actual_enrollment));
    BackboneConfig b;
    b.d_emb = data.embeddings.dim;
    b.d_cat = enc.cat_width();
    TrainConfig tc;
    tc.max_epochs = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train_model(HeadKind::Deterministic, enc, set, set, b, tc));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
