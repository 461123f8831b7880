#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace enfc {

/// Shape/rate pair of a Gamma distribution (mean shape/rate, variance shape/rate²).
struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;

    /// Throws DomainError unless both fields are finite and strictly positive.
    void validate() const;

    double mean() const { return shape / rate; }
    double variance() const { return shape / (rate * rate); }

    friend bool operator==(const GammaParams&, const GammaParams&) = default;
};

/// Checked constructor for GammaParams.
GammaParams make_gamma(double shape, double rate);

/// xoshiro256** generator with explicit seeding and stream splitting.
///
/// A generator is single-owner. Parallel work takes one `split(i)` stream per
/// task; the derived stream depends only on the parent seed and `i`, so results
/// do not depend on which task runs first.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform on the open interval (0, 1).
    double uniform();

    /// Standard normal draw (128-layer ziggurat).
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Independent child stream `index` of this generator's seed.
    Rng split(std::uint64_t index) const;

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

/// SplitMix64 finalizer; also used to hash seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Fisher–Yates shuffle driven by `rng` (portable, unlike std::shuffle).
template <class T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

// Gamma distribution

/// α ln λ − ln Γ(α) + (α−1) ln x − λ x. Throws DomainError for x <= 0.
double gamma_log_pdf(const GammaParams& params, double x);
double gamma_cdf(const GammaParams& params, double x);
/// Throws DomainError unless 0 < p < 1.
double gamma_quantile(const GammaParams& params, double p);
/// Marsaglia–Tsang squeeze; shape < 1 uses the U^{1/α} boost.
double gamma_sample(const GammaParams& params, Rng& rng);

// Poisson distribution

/// Inversion by sequential search below rate 30, PTRS transformed
/// rejection above. Throws DomainError for negative or non-finite rate.
std::int64_t poisson_sample(double rate, Rng& rng);
double poisson_log_pmf(double rate, std::int64_t k);

}  // namespace enfc
