#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "enfc/randdist.hpp"

namespace enfc {

/// One trial's Poisson-Gamma enrollment process.
struct SimSpec {
    std::int64_t n_sites = 1;
    std::int64_t target = 1;  // first-passage threshold
    GammaParams rate_dist;     // patients per site per month
    GammaParams startup_dist;  // months
    double time_step = 1.0;
    double cap_months = 72.0;
    bool record_trajectory = false;

    // Test hook: when non-empty (size n_sites) these replace the Gamma draws.
    std::vector<double> direct_rates;
    std::vector<double> direct_startups;

    /// Throws DomainError on an invalid spec.
    void validate() const;
};

struct SimResult {
    double duration_months = 0.0;  // step index (1-based) times time_step, or cap when censored
    bool censored = false;
    std::vector<std::int64_t> trajectory;  // cumulative enrollment per step, when recorded
};

/// Fraction of step `t` (1-based, covering [(t-1)h, th)) at or after `startup`.
double site_exposure(double startup, std::int64_t t, double step);

/// Draws per-site rates and startups, then monthly Poisson increments until the
/// cumulative count reaches the target or the cap is hit.
SimResult simulate_once(const SimSpec& spec, Rng& rng);

inline constexpr std::array<double, 5> kSummaryQuantiles = {0.05, 0.25, 0.5, 0.75, 0.95};

struct DurationSummary {
    double mean = 0.0;
    std::array<double, 5> quantiles{};  // at kSummaryQuantiles
    double censor_fraction = 0.0;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
};

/// Replication i runs on Rng(seed).split(i); the summary does not depend on
/// evaluation order.
DurationSummary estimate_duration(const SimSpec& spec, std::size_t replications, std::uint64_t seed);

/// Linear-interpolation quantile (type 7) of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double p);

/// {"trial_id", "mean", "quantiles": {"q05": ...}, "censor_fraction", "replications", "seed", ...extra}
nlohmann::ordered_json summary_to_json(const std::string& trial_id, const DurationSummary& summary);

}  // namespace enfc
