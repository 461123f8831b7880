#include "enfc/pgsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "enfc/error.hpp"

namespace enfc {

void SimSpec::validate() const {
    std::ostringstream os;
    if (n_sites < 1) os << "n_sites must be positive; ";
    if (target < 1) os << "target must be positive; ";
    if (!(time_step > 0.0) || !std::isfinite(time_step)) os << "time_step must be positive; ";
    if (!(cap_months >= time_step) || !std::isfinite(cap_months)) os << "cap_months must be >= time_step; ";
    if (!direct_rates.empty() && direct_rates.size() != static_cast<std::size_t>(n_sites)) {
        os << "direct_rates size differs from n_sites; ";
    }
    if (!direct_startups.empty() && direct_startups.size() != static_cast<std::size_t>(n_sites)) {
        os << "direct_startups size differs from n_sites; ";
    }
    for (double r : direct_rates) {
        if (!(r >= 0.0) || !std::isfinite(r)) os << "direct rates must be finite and >= 0; ";
    }
    for (double s : direct_startups) {
        if (!(s >= 0.0) || !std::isfinite(s)) os << "direct startups must be finite and >= 0; ";
    }
    if (const auto msg = os.str(); !msg.empty()) throw DomainError("SimSpec: " + msg);
    if (direct_rates.empty()) rate_dist.validate();
    if (direct_startups.empty()) startup_dist.validate();
}

double site_exposure(double startup, std::int64_t t, double step) {
    const double begin = static_cast<double>(t - 1) * step;
    const double end = static_cast<double>(t) * step;
    return std::clamp((end - std::max(startup, begin)) / step, 0.0, 1.0);
}

namespace {

struct Site {
    double startup;
    double rate;
    std::size_t index;
};

// Expects a validated spec; `sites` is scratch reused across replications.
SimResult run_replication(const SimSpec& spec, Rng& rng, std::vector<Site>& sites) {
    const auto n = static_cast<std::size_t>(spec.n_sites);
    sites.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double rate = spec.direct_rates.empty() ? gamma_sample(spec.rate_dist, rng) : spec.direct_rates[s];
        const double startup =
            spec.direct_startups.empty() ? gamma_sample(spec.startup_dist, rng) : spec.direct_startups[s];
        sites[s] = {startup, rate, s};
    }
    // Ordered by startup so the active set grows monotonically. Ties keep draw order.
    std::sort(sites.begin(), sites.end(), [](const Site& a, const Site& b) {
        return a.startup != b.startup ? a.startup < b.startup : a.index < b.index;
    });

    const auto steps = static_cast<std::int64_t>(std::ceil(spec.cap_months / spec.time_step - 1e-12));
    SimResult result;
    std::int64_t total = 0;
    double full_rate = 0.0;  // summed rate of sites active for the whole step
    std::size_t next = 0;
    for (std::int64_t t = 1; t <= steps; ++t) {
        const double begin = static_cast<double>(t - 1) * spec.time_step;
        while (next < n && sites[next].startup <= begin) full_rate += sites[next++].rate;
        double partial = 0.0;
        for (std::size_t k = next; k < n; ++k) {
            const double e = site_exposure(sites[k].startup, t, spec.time_step);
            if (e <= 0.0) break;
            partial += sites[k].rate * e;
        }
        // Sum of independent per-site Poisson counts is Poisson with the summed mean.
        const double mean = (full_rate + partial) * spec.time_step;
        if (mean > 0.0) total += poisson_sample(mean, rng);
        if (spec.record_trajectory) result.trajectory.push_back(total);
        if (total >= spec.target) {
            result.duration_months = static_cast<double>(t) * spec.time_step;
            return result;
        }
    }
    result.duration_months = spec.cap_months;
    result.censored = true;
    return result;
}

}  // namespace

SimResult simulate_once(const SimSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<Site> sites;
    return run_replication(spec, rng, sites);
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw StructuralError("sorted_quantile: empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

DurationSummary estimate_duration(const SimSpec& spec, std::size_t replications, std::uint64_t seed) {
    if (replications == 0) throw DomainError("estimate_duration: replications must be positive");
    spec.validate();
    const Rng root(seed);
    std::vector<double> durations(replications);
    std::vector<Site> sites;
    std::size_t censored = 0;
    for (std::size_t i = 0; i < replications; ++i) {
        Rng stream = root.split(i);
        const auto r = run_replication(spec, stream, sites);
        durations[i] = r.duration_months;
        censored += r.censored ? 1 : 0;
    }
    std::sort(durations.begin(), durations.end());
    DurationSummary out;
    double sum = 0.0;
    for (double d : durations) sum += d;
    out.mean = sum / static_cast<double>(replications);
    for (std::size_t q = 0; q < kSummaryQuantiles.size(); ++q) {
        out.quantiles[q] = sorted_quantile(durations, kSummaryQuantiles[q]);
    }
    out.censor_fraction = static_cast<double>(censored) / static_cast<double>(replications);
    out.replications = replications;
    out.seed = seed;
    return out;
}

nlohmann::ordered_json summary_to_json(const std::string& trial_id, const DurationSummary& s) {
    nlohmann::ordered_json q = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < kSummaryQuantiles.size(); ++i) {
        char key[8];
        std::snprintf(key, sizeof key, "q%02d", static_cast<int>(std::lround(kSummaryQuantiles[i] * 100)));
        q[key] = s.quantiles[i];
    }
    return {{"trial_id", trial_id},     {"mean", s.mean},
            {"quantiles", q},           {"censor_fraction", s.censor_fraction},
            {"replications", s.replications}, {"seed", s.seed}};
}

}  // namespace enfc
