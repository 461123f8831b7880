#include "enfc/filterfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "enfc/autograd.hpp"
#include "enfc/error.hpp"
#include "enfc/log.hpp"
#include "enfc/optim.hpp"
#include "enfc/specfun.hpp"

namespace enfc {
namespace {

bool overlaps(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (const auto& x : a) {
        if (std::find(b.begin(), b.end(), x) != b.end()) return true;
    }
    return false;
}

// ψ'(x) by upward recurrence and the asymptotic series.
double trigamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 +
                                                                               inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))))));
    return acc + series;
}

struct SampleStats {
    double mean = 0.0;
    double mean_log = 0.0;
};

SampleStats check_samples(std::span<const double> samples, const char* fn) {
    if (samples.size() < 2) {
        throw InsufficientDataError(std::string(fn) + ": need at least 2 samples, got " +
                                    std::to_string(samples.size()));
    }
    SampleStats s;
    const double n = static_cast<double>(samples.size());
    for (double x : samples) {
        if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(fn) + ": samples must be positive and finite");
        s.mean += x / n;
        s.mean_log += std::log(x) / n;
    }
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    if (*lo == *hi) throw DegenerateDataError(std::string(fn) + ": all samples are equal (zero variance)");
    return s;
}

}  // namespace

std::vector<CategoricalFeature> all_categorical_features() {
    return {kCategoricalFeatures.begin(), kCategoricalFeatures.end()};
}

std::vector<TrialRecord> find_similar(const TrialRecord& query, std::span<const TrialRecord> corpus,
                                      const std::vector<CategoricalFeature>& features) {
    std::vector<TrialRecord> out;
    for (const auto& candidate : corpus) {
        if (candidate.trial_id == query.trial_id) continue;
        const bool all = std::all_of(features.begin(), features.end(), [&](CategoricalFeature f) {
            return overlaps(labels_of(query, f), labels_of(candidate, f));
        });
        if (all) out.push_back(candidate);
    }
    return out;
}

double gamma_mean_nll(const GammaParams& params, std::span<const double> samples) {
    params.validate();
    if (samples.empty()) throw StructuralError("gamma_mean_nll: no samples");
    double total = 0.0;
    for (double x : samples) total -= gamma_log_pdf(params, x);
    return total / static_cast<double>(samples.size());
}

GammaParams fit_gamma_newton(std::span<const double> samples) {
    const auto stats = check_samples(samples, "fit_gamma_newton");
    const double s = std::log(stats.mean) - stats.mean_log;
    if (!(s > 0.0)) throw DegenerateDataError("fit_gamma_newton: samples carry no spread in log space");
    double alpha = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
    for (int iter = 0; iter < 100; ++iter) {
        const double f = std::log(alpha) - specfun::digamma(alpha) - s;
        const double fp = 1.0 / alpha - trigamma(alpha);
        double next = alpha - f / fp;
        if (!(next > 0.0)) next = 0.5 * alpha;
        const double delta = std::fabs(next - alpha);
        alpha = next;
        if (delta <= 1e-10 * alpha) return make_gamma(alpha, alpha / stats.mean);
    }
    throw NumericError("fit_gamma_newton: no convergence in 100 iterations (s=" + std::to_string(s) + ")");
}

GammaParams fit_gamma_gradient(std::span<const double> samples, const GradientFitConfig& config) {
    const auto stats = check_samples(samples, "fit_gamma_gradient");
    if (config.batch_size == 0) throw DomainError("fit_gamma_gradient: batch size must be positive");

    ad::ParameterStore store;
    store.add("log_shape", Tensor::vector({0.0}));
    store.add("log_rate", Tensor::vector({-std::log(stats.mean)}));
    ad::RmsProp opt({.lr = config.lr, .decay = config.decay, .eps = config.eps, .weight_decay = 0.0, .group_lr = {}});

    auto step_on = [&](std::vector<double> batch) {
        ad::Graph g(&store);
        const auto shape = g.parameter("log_shape");
        const auto rate = g.parameter("log_rate");
        const auto loss = ad::gamma_nll_grouped(g, shape, rate, {std::move(batch)});
        g.backward(loss);
        auto grads = g.parameter_gradients();
        opt.step(store, grads);
        return std::max(std::fabs(grads.at("log_shape")[0]), std::fabs(grads.at("log_rate")[0]));
    };

    std::vector<double> data(samples.begin(), samples.end());
    Rng rng(config.seed);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(std::span<double>(data), rng);
        for (std::size_t start = 0; start < data.size(); start += config.batch_size) {
            const std::size_t end = std::min(data.size(), start + config.batch_size);
            step_on(std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(start),
                                        data.begin() + static_cast<std::ptrdiff_t>(end)));
        }
    }

    if (config.refine) {
        double lr = config.lr;
        bool converged = false;
        for (std::size_t round = 0; round < config.refine_max_rounds && !converged; ++round) {
            opt.config().lr = lr;
            for (std::size_t k = 0; k < config.refine_steps_per_round; ++k) {
                if (step_on(data) < config.grad_tol) {
                    converged = true;
                    break;
                }
            }
            lr *= 0.5;
        }
    }
    const double shape = std::exp(store.get("log_shape")[0]);
    const double rate = std::exp(store.get("log_rate")[0]);
    if (!std::isfinite(shape) || !std::isfinite(rate) || shape <= 0.0 || rate <= 0.0) {
        throw NumericError("fit_gamma_gradient: parameters left the representable range");
    }
    return make_gamma(shape, rate);
}

FilterFitResult predict_duration_filterfit(const TrialRecord& query, std::span<const TrialRecord> corpus,
                                           std::span<const SiteOutcome> sites, const FilterFitConfig& config) {
    if (query.planned_sites < 1 || query.planned_participants < 1) {
        throw DataError("filter-fit: trial '" + query.trial_id + "' lacks planned sites or target enrollment");
    }
    const auto similar = find_similar(query, corpus, config.features);
    std::set<std::string> ids;
    for (const auto& t : similar) ids.insert(t.trial_id);
    std::vector<double> rates;
    std::vector<double> startups;
    for (const auto& s : sites) {
        if (!ids.contains(s.trial_id)) continue;
        rates.push_back(s.rate + config.sample_shift);
        startups.push_back(s.startup_months + config.sample_shift);
    }
    if (rates.size() < config.min_samples) {
        throw InsufficientDataError("filter-fit: trial '" + query.trial_id + "' has " + std::to_string(rates.size()) +
                                    " similar-site samples from " + std::to_string(similar.size()) +
                                    " similar trials; need " + std::to_string(config.min_samples));
    }
    FilterFitResult out;
    out.similar_trials = similar.size();
    out.site_samples = rates.size();
    auto fit = [&](std::span<const double> xs) {
        try {
            return fit_gamma_gradient(xs, config.gradient);
        } catch (const NumericError& e) {
            logger().info("filter-fit: gradient fit failed ({}); using Newton", e.what());
            out.newton_fallback = true;
            return fit_gamma_newton(xs);
        }
    };
    out.rate_dist = fit(rates);
    out.startup_dist = fit(startups);

    SimSpec spec;
    spec.n_sites = query.planned_sites;
    spec.target = query.planned_participants;
    spec.rate_dist = out.rate_dist;
    spec.startup_dist = out.startup_dist;
    spec.cap_months = config.cap_months;
    out.summary = estimate_duration(spec, config.replications, config.seed);
    return out;
}

}  // namespace enfc
