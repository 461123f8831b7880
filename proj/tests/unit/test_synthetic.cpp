#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "enfc/dataio.hpp"
#include "enfc/encoding.hpp"
#include "enfc/error.hpp"
#include "enfc/synthetic.hpp"

using namespace enfc;

namespace {

SyntheticDataset make(std::size_t n, std::uint64_t seed, const std::string& profile = "enrollment") {
    SyntheticConfig cfg;
    cfg.n_trials = n;
    cfg.seed = seed;
    cfg.profile = profile;
    return generate_synthetic(cfg);
}

std::string dump(const SyntheticDataset& d) {
    std::ostringstream os;
    write_trials(os, d.trials);
    write_sites(os, d.sites);
    write_embeddings(os, d.embeddings);
    write_latents(os, d.latents);
    return os.str();
}

// Trapezoid rule for E|e^x − 1|, x ~ N(0, σ²).
double abs_deviation_quadrature(double sigma) {
    const int n = 200'000;
    const double lo = -12.0 * sigma, hi = 12.0 * sigma, h = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + h * i;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        sum += w * std::fabs(std::expm1(x)) * std::exp(-0.5 * x * x / (sigma * sigma));
    }
    return sum * h / (sigma * std::sqrt(2.0 * M_PI));
}

}  // namespace

TEST_CASE("generation is reproducible and prefix-stable") {
    const auto a = make(40, 3);
    const auto b = make(40, 3);
    CHECK(dump(a) == dump(b));
    const auto longer = make(55, 3);
    for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(longer.trials[i] == a.trials[i]);
    CHECK(dump(make(40, 4)) != dump(a));
    CHECK(a.trials.front().trial_id == "SYN-000001");
}

TEST_CASE("records are well formed") {
    for (const std::string profile : {"enrollment", "poisson_gamma"}) {
        const auto d = make(150, 8, profile);
        REQUIRE(d.trials.size() == 150);
        REQUIRE(d.latents.size() == 150);
        CHECK(d.embeddings.rows() == 150);
        std::map<std::string, std::int64_t> site_sum;
        std::map<std::string, std::size_t> site_count;
        for (const auto& s : d.sites) {
            CHECK(s.patients >= 0);
            CHECK(s.rate >= 0.0);
            site_sum[s.trial_id] += s.patients;
            ++site_count[s.trial_id];
        }
        for (std::size_t i = 0; i < d.trials.size(); ++i) {
            const auto& t = d.trials[i];
            INFO(t.trial_id);
            CHECK(t.planned_sites >= 1);
            CHECK(t.planned_participants >= 1);
            CHECK(site_count[t.trial_id] <= static_cast<std::size_t>(t.planned_sites));
            CHECK_FALSE(t.phase.empty());
            CHECK_FALSE(t.countries.empty());
            CHECK_FALSE(serialize_context(t).empty());
            REQUIRE(t.actual_enrollment.has_value());
            CHECK(*t.actual_enrollment == site_sum[t.trial_id]);
            CHECK(*t.actual_enrollment <= d.latents[i].target);
            if (!d.latents[i].censored) CHECK(*t.actual_enrollment == d.latents[i].target);
            if (profile == "poisson_gamma") CHECK(d.latents[i].target == t.planned_participants);
        }
    }
}

TEST_CASE("realized enrollment follows the latent expectation") {
    // OLS of ln(y + 1) on [1, ln f, noise] over uncensored trials.
    const auto d = make(1500, 12);
    double s[3][3] = {}, r[3] = {}, yy = 0.0, ysum = 0.0;
    std::size_t n = 0;
    std::vector<std::array<double, 4>> rows;
    for (std::size_t i = 0; i < d.trials.size(); ++i) {
        if (d.latents[i].censored) continue;
        const double y = std::log1p(static_cast<double>(*d.trials[i].actual_enrollment));
        rows.push_back({1.0, d.latents[i].log_expected_enrollment, d.latents[i].enrollment_noise, y});
    }
    for (const auto& row : rows) {
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) s[a][b] += row[a] * row[b];
            r[a] += row[a] * row[3];
        }
        yy += row[3] * row[3];
        ysum += row[3];
        ++n;
    }
    // Gaussian elimination on the 3x3 normal equations.
    for (int k = 0; k < 3; ++k) {
        for (int i = k + 1; i < 3; ++i) {
            const double f = s[i][k] / s[k][k];
            for (int j = k; j < 3; ++j) s[i][j] -= f * s[k][j];
            r[i] -= f * r[k];
        }
    }
    double beta[3];
    for (int k = 2; k >= 0; --k) {
        beta[k] = r[k];
        for (int j = k + 1; j < 3; ++j) beta[k] -= s[k][j] * beta[j];
        beta[k] /= s[k][k];
    }
    double ss_res = 0.0;
    for (const auto& row : rows) {
        const double e = row[3] - (beta[0] + beta[1] * row[1] + beta[2] * row[2]);
        ss_res += e * e;
    }
    const double mean = ysum / static_cast<double>(n);
    const double r2 = 1.0 - ss_res / (yy - static_cast<double>(n) * mean * mean);
    INFO("slopes " << beta[1] << " " << beta[2]);
    CHECK(r2 >= 0.9);
    CHECK(beta[1] == Catch::Approx(1.0).margin(0.1));
    CHECK(beta[2] == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("latents round trip through json lines") {
    const auto d = make(25, 5);
    std::stringstream ss;
    write_latents(ss, d.latents);
    CHECK(read_latents(ss) == d.latents);
}

TEST_CASE("embedding is a function of the context text") {
    const auto d = make(3, 6);
    const auto spec = default_coefficients().embedding;
    const auto e0 = hashed_text_embedding(d.trials[0], spec);
    CHECK(e0.size() == spec.dim);
    CHECK(e0 == hashed_text_embedding(d.trials[0], spec));
    CHECK(e0 != hashed_text_embedding(d.trials[1], spec));
}

TEST_CASE("noise floor matches quadrature") {
    CHECK(lognormal_abs_deviation(0.0) == 0.0);
    for (double sigma : {0.1, 0.6, 1.5}) {
        INFO("sigma " << sigma);
        CHECK(lognormal_abs_deviation(sigma) == Catch::Approx(abs_deviation_quadrature(sigma)).epsilon(1e-7));
    }
    std::vector<TrialLatent> l(2);
    l[0].log_expected_enrollment = std::log(100.0);
    l[1].log_expected_enrollment = std::log(300.0);
    CHECK(enrollment_noise_floor(l, 0.6) == Catch::Approx(200.0 * lognormal_abs_deviation(0.6)));
    CHECK_THROWS_AS(lognormal_abs_deviation(-1.0), DomainError);
}

TEST_CASE("coefficient parsing") {
    const auto& c = default_coefficients();
    CHECK(c.version == 1);
    CHECK_NOTHROW(c.profile("enrollment"));
    CHECK_THROWS_AS(c.profile("nope"), UsageError);
    CHECK_THROWS(parse_coefficients("{\"version\": 1}"));
    CHECK_THROWS(parse_coefficients("not json"));
    SyntheticConfig cfg;
    cfg.profile = "nope";
    CHECK_THROWS_AS(generate_synthetic(cfg), UsageError);
}
