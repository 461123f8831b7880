#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "enfc/error.hpp"
#include "enfc/models.hpp"
#include "enfc/synthetic.hpp"
#include "model_fixtures.hpp"

using namespace enfc;

namespace {

struct Corpus {
    SyntheticDataset data;
    Encoder encoder;
    TrainingSet set;
};

Corpus small_corpus(std::size_t n, std::uint64_t seed, const std::string& profile = "enrollment") {
    Corpus c;
    SyntheticConfig cfg;
    cfg.n_trials = n;
    cfg.seed = seed;
    cfg.profile = profile;
    c.data = generate_synthetic(cfg);
    c.encoder = Encoder::fit(c.data.trials);
    c.set.x = c.encoder.encode_batch(c.data.trials, c.data.embeddings);
    for (const auto& t : c.data.trials) c.set.enrollment.push_back(static_cast<double>(*t.actual_enrollment));
    attach_site_targets(c.set, c.data.trials, c.data.sites);
    return c;
}

ModelCheckpoint zero_model(const Corpus& c, HeadKind head) {
    ModelCheckpoint m;
    m.head = head;
    m.encoder = c.encoder;
    m.backbone.d_emb = c.data.embeddings.dim;
    m.backbone.d_cat = c.encoder.cat_width();
    Rng rng(1);
    init_parameters(m.weights, m.backbone, head, rng);
    for (auto& p : m.weights.entries()) p.value.fill(0.0);
    return m;
}

}  // namespace

TEST_CASE("head names") {
    for (auto h : {HeadKind::Deterministic, HeadKind::Gamma, HeadKind::PoissonGamma}) {
        CHECK(parse_head_kind(to_string(h)) == h);
    }
    CHECK(to_string(HeadKind::Gamma) == "stochastic");
    CHECK(parse_head_kind("gamma") == HeadKind::Gamma);
    CHECK_THROWS_AS(parse_head_kind("linear"), UsageError);
}

TEST_CASE("config validation") {
    BackboneConfig b = testing::tiny_backbone();
    CHECK_NOTHROW(b.validate());
    b.heads = 3;  // 8 is not divisible by 3
    CHECK_THROWS(b.validate());
    TrainConfig t;
    t.patience = 0;
    CHECK_THROWS(t.validate());
    CHECK(TrainConfig::poisson_gamma().batch_size == 32);
    CHECK(TrainConfig::poisson_gamma().max_epochs == 256);
}

TEST_CASE("finite-difference check of the full model") {
    for (auto h : {HeadKind::Deterministic, HeadKind::Gamma, HeadKind::PoissonGamma}) {
        const auto report = testing::model_fd(h, 17);
        INFO(to_string(h) << ": " << report.where);
        CHECK(report.worst_rel <= 1e-4);
    }
}

TEST_CASE("zero weights give a zero backbone output") {
    const auto c = small_corpus(12, 5);
    auto m = zero_model(c, HeadKind::Deterministic);
    ad::Graph g(&m.weights, ad::Mode::Eval);
    const ad::NodeId h = forward_backbone(g, m.backbone, c.set.x);
    CHECK(g.shape(h) == Shape{12, m.backbone.hidden});
    for (double v : g.value(h).values()) CHECK(v == 0.0);
    for (double y : predict_point(m, c.set.x)) CHECK(y == 0.0);
}

TEST_CASE("predictions require the matching head") {
    const auto c = small_corpus(8, 6);
    const auto det = zero_model(c, HeadKind::Deterministic);
    const auto gam = zero_model(c, HeadKind::Gamma);
    const auto pg = zero_model(c, HeadKind::PoissonGamma);
    CHECK_THROWS_AS(predict_distribution(det, c.set.x), UsageError);
    CHECK_THROWS_AS(predict_point(gam, c.set.x), UsageError);
    CHECK_THROWS_AS(predict_site_params(gam, c.set.x), UsageError);
    CHECK_THROWS_AS(predict_enrollment(pg, c.set.x), UsageError);
    CHECK_THROWS_AS(predict_interval(det, c.set.x, 0.1), UsageError);
    CHECK_NOTHROW(predict_enrollment(gam, c.set.x));
}

TEST_CASE("stochastic point estimate and interval of a unit Gamma") {
    const auto c = small_corpus(4, 7);
    const auto m = zero_model(c, HeadKind::Gamma);
    for (const auto& p : predict_distribution(m, c.set.x)) {
        CHECK(p.shape == 1.0);
        CHECK(p.rate == 1.0);
    }
    for (double y : predict_enrollment(m, c.set.x)) CHECK(y == Catch::Approx(std::expm1(1.0)));
    // Exponential(1) quantiles: -ln(1 - p).
    const auto iv = interval_from_log_gamma(make_gamma(1.0, 1.0), 0.1);
    CHECK(iv.lower == Catch::Approx(std::expm1(-std::log(0.95))).epsilon(1e-10));
    CHECK(iv.upper == Catch::Approx(std::expm1(-std::log(0.05))).epsilon(1e-10));
    CHECK(iv.level == Catch::Approx(0.9));
    CHECK_THROWS_AS(interval_from_log_gamma(make_gamma(1.0, 1.0), 0.0), DomainError);
    CHECK_THROWS_AS(interval_from_log_gamma(make_gamma(1.0, 1.0), 1.0), DomainError);
}

TEST_CASE("calibration sweep is monotone in the level") {
    auto c = small_corpus(60, 8);
    Rng rng(4);
    auto m = zero_model(c, HeadKind::Gamma);
    for (auto& p : m.weights.entries()) {
        for (auto& v : p.value.values()) v = 0.05 * rng.normal();
    }
    const std::vector<double> grid = {0.5, 0.3, 0.2, 0.1, 0.05};
    const auto rows = calibration_sweep(m, c.set.x, c.set.enrollment, grid);
    REQUIRE(rows.size() == grid.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].level == Catch::Approx(1.0 - grid[i]));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].accuracy >= rows[i - 1].accuracy);
        CHECK(rows[i].median_width >= rows[i - 1].median_width);
    }
    const std::vector<double> short_truth(3, 1.0);
    CHECK_THROWS_AS(calibration_sweep(m, c.set.x, short_truth, grid), StructuralError);
}

TEST_CASE("unit Poisson-Gamma model simulates like the direct estimator") {
    const auto c = small_corpus(6, 9, "poisson_gamma");
    const auto m = zero_model(c, HeadKind::PoissonGamma);
    const auto& trial = c.data.trials[2];
    const std::vector<TrialRecord> one{trial};
    const auto row = m.encoder.encode_batch(one, c.data.embeddings);
    DurationSettings settings;
    settings.replications = 256;
    settings.seed = 31;
    const auto got = predict_trial_duration(m, trial, row, settings);

    SimSpec spec;
    spec.n_sites = trial.planned_sites;
    spec.target = trial.planned_participants;
    spec.rate_dist = make_gamma(1.0, 1.0);
    spec.startup_dist = make_gamma(1.0, 1.0);
    spec.cap_months = 72.0;
    const auto want = estimate_duration(spec, 256, 31);
    CHECK(got.mean == want.mean);
    CHECK(got.quantiles == want.quantiles);
    CHECK(got.censor_fraction == want.censor_fraction);

    TrialRecord bad = trial;
    bad.planned_sites = 0;
    CHECK_THROWS_AS(predict_trial_duration(m, bad, row, settings), DataError);
}

TEST_CASE("training reduces the loss and is reproducible") {
    const auto c = small_corpus(200, 10);
    std::vector<std::size_t> tr(160), dv(40);
    std::iota(tr.begin(), tr.end(), 0);
    std::iota(dv.begin(), dv.end(), 160);
    auto pick = [&](const std::vector<std::size_t>& idx) {
        TrainingSet s;
        s.x = gather(c.set.x, idx);
        for (auto i : idx) s.enrollment.push_back(c.set.enrollment[i]);
        return s;
    };
    const auto train = pick(tr);
    const auto dev = pick(dv);
    BackboneConfig b;
    b.d_emb = c.data.embeddings.dim;
    b.d_cat = c.encoder.cat_width();
    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.patience = 12;
    cfg.batch_size = 32;
    cfg.seed = 5;
    std::size_t calls = 0;
    const auto m = train_model(HeadKind::Deterministic, c.encoder, train, dev, b, cfg,
                               [&](const EpochReport&) { ++calls; });
    CHECK(calls == 12);
    REQUIRE(m.meta.train_loss_history.size() == 12);
    CHECK(m.meta.train_loss_history.back() < m.meta.train_loss_history.front());
    CHECK(m.meta.dev_metric == "mae");
    CHECK(m.meta.best_dev_metric ==
          *std::min_element(m.meta.dev_history.begin(), m.meta.dev_history.end()));
    const auto again = train_model(HeadKind::Deterministic, c.encoder, train, dev, b, cfg);
    CHECK(again == m);
}

TEST_CASE("training rejects misaligned targets") {
    const auto c = small_corpus(20, 11);
    TrainingSet bad = c.set;
    bad.enrollment.pop_back();
    BackboneConfig b;
    b.d_emb = c.data.embeddings.dim;
    b.d_cat = c.encoder.cat_width();
    TrainConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS(train_model(HeadKind::Deterministic, c.encoder, bad, c.set, b, cfg));
}
