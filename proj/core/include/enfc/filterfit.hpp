#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "enfc/pgsim.hpp"
#include "enfc/randdist.hpp"
#include "enfc/records.hpp"

namespace enfc {

std::vector<CategoricalFeature> all_categorical_features();

/// Corpus trials whose label set overlaps the query's on every listed feature.
/// A corpus entry with the query's trial_id is skipped. Corpus order is kept.
std::vector<TrialRecord> find_similar(const TrialRecord& query, std::span<const TrialRecord> corpus,
                                      const std::vector<CategoricalFeature>& features = all_categorical_features());

/// Mean negative log-likelihood of `samples` under `params`.
double gamma_mean_nll(const GammaParams& params, std::span<const double> samples);

struct GradientFitConfig {
    double lr = 0.01;
    std::size_t batch_size = 128;
    std::size_t epochs = 512;
    double decay = 0.9;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    /// After the minibatch epochs, full-batch RMSprop rounds with the learning
    /// rate halved each round until the gradient falls below `grad_tol`.
    bool refine = true;
    std::size_t refine_steps_per_round = 200;
    std::size_t refine_max_rounds = 60;
    double grad_tol = 1e-10;
};

/// RMSprop on (ln shape, ln rate) minimizing the mean Gamma NLL.
/// InsufficientDataError below 2 samples, DegenerateDataError when all
/// samples are equal, DomainError for non-positive samples.
GammaParams fit_gamma_gradient(std::span<const double> samples, const GradientFitConfig& config = {});

/// Newton iteration on ln α − ψ(α) = ln(mean) − mean(ln x); rate = α / mean.
/// NumericError when 100 iterations do not reach |Δα| ≤ 1e-10 α.
GammaParams fit_gamma_newton(std::span<const double> samples);

struct FilterFitConfig {
    std::vector<CategoricalFeature> features = all_categorical_features();
    std::size_t min_samples = 30;
    double sample_shift = 1e-6;
    std::size_t replications = 1024;
    double cap_months = 72.0;
    std::uint64_t seed = 0;
    GradientFitConfig gradient;
};

struct FilterFitResult {
    GammaParams rate_dist;
    GammaParams startup_dist;
    std::size_t similar_trials = 0;
    std::size_t site_samples = 0;
    bool newton_fallback = false;
    DurationSummary summary;
};

/// Pools site rates and startups of trials similar to `query`, fits both
/// Gammas and simulates the query's duration with its planned sites and
/// target enrollment. InsufficientDataError (naming the count) when fewer than
/// min_samples site outcomes are available.
FilterFitResult predict_duration_filterfit(const TrialRecord& query, std::span<const TrialRecord> corpus,
                                           std::span<const SiteOutcome> sites, const FilterFitConfig& config = {});

}  // namespace enfc
