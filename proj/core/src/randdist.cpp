#include "enfc/randdist.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "enfc/error.hpp"
#include "enfc/specfun.hpp"

namespace enfc {

void GammaParams::validate() const {
    if (!(shape > 0.0) || !std::isfinite(shape) || !(rate > 0.0) || !std::isfinite(rate)) {
        std::ostringstream os;
        os << "GammaParams: shape and rate must be finite and positive (shape=" << shape
           << ", rate=" << rate << ")";
        throw DomainError(os.str());
    }
}

GammaParams make_gamma(double shape, double rate) {
    GammaParams p{shape, rate};
    p.validate();
    return p;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        s = splitmix64(s);
        word = s;
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

namespace {

// Ziggurat with 128 layers (Doornik's variant of Marsaglia & Tsang).
struct ZigguratTables {
    static constexpr int kLayers = 128;
    static constexpr double kTail = 3.442619855899;
    static constexpr double kArea = 9.91256303526217e-3;
    std::array<double, kLayers + 1> x{};
    std::array<double, kLayers> ratio{};

    ZigguratTables() {
        double f = std::exp(-0.5 * kTail * kTail);
        x[0] = kArea / f;
        x[1] = kTail;
        x[kLayers] = 0.0;
        for (int i = 2; i < kLayers; ++i) {
            x[i] = std::sqrt(-2.0 * std::log(kArea / x[i - 1] + f));
            f = std::exp(-0.5 * x[i] * x[i]);
        }
        for (int i = 0; i < kLayers; ++i) ratio[i] = x[i + 1] / x[i];
    }
};

const ZigguratTables& zig() {
    static const ZigguratTables tables;
    return tables;
}

}  // namespace

double Rng::normal() {
    const auto& z = zig();
    while (true) {
        const std::uint64_t bits = next_u64();
        const int i = static_cast<int>(bits & 0x7F);
        const double u = 2.0 * ((static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53) - 1.0;
        if (std::fabs(u) < z.ratio[i]) return u * z.x[i];
        if (i == 0) {
            double x;
            double y;
            do {
                x = std::log(uniform()) / ZigguratTables::kTail;
                y = std::log(uniform());
            } while (-2.0 * y < x * x);
            return u < 0.0 ? x - ZigguratTables::kTail : ZigguratTables::kTail - x;
        }
        const double x = u * z.x[i];
        const double f0 = std::exp(-0.5 * (z.x[i] * z.x[i] - x * x));
        const double f1 = std::exp(-0.5 * (z.x[i + 1] * z.x[i + 1] - x * x));
        if (f1 + uniform() * (f0 - f1) < 1.0) return x;
    }
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: n must be positive");
    // Lemire's nearly-divisionless rejection.
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t x = next_u64();
        __extension__ using u128 = unsigned __int128;
        const u128 m = static_cast<u128>(x) * n;
        if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
}

Rng Rng::split(std::uint64_t index) const {
    return Rng(splitmix64(seed_ ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

double gamma_log_pdf(const GammaParams& params, double x) {
    params.validate();
    if (!(x > 0.0) || !std::isfinite(x)) {
        std::ostringstream os;
        os << "gamma_log_pdf: x must be positive and finite (x=" << x << ")";
        throw DomainError(os.str());
    }
    return params.shape * std::log(params.rate) - specfun::ln_gamma(params.shape) +
           (params.shape - 1.0) * std::log(x) - params.rate * x;
}

double gamma_cdf(const GammaParams& params, double x) {
    params.validate();
    if (x <= 0.0) return 0.0;
    return specfun::reg_lower_inc_gamma(params.shape, params.rate * x);
}

double gamma_quantile(const GammaParams& params, double p) {
    params.validate();
    if (!(p > 0.0) || !(p < 1.0)) {
        std::ostringstream os;
        os << "gamma_quantile: p must lie in (0, 1) (p=" << p << ")";
        throw DomainError(os.str());
    }
    return specfun::inv_reg_lower_inc_gamma(params.shape, p) / params.rate;
}

namespace {

double standard_gamma_mt(double shape, Rng& rng) {
    // Marsaglia & Tsang (2000), shape >= 1.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x;
        double v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::int64_t poisson_inversion(double rate, Rng& rng) {
    const double u = rng.uniform();
    double p = std::exp(-rate);
    double cdf = p;
    std::int64_t k = 0;
    while (u > cdf) {
        ++k;
        p *= rate / static_cast<double>(k);
        cdf += p;
        // Remaining tail is below double resolution.
        if (p < 1e-300 && static_cast<double>(k) > rate) break;
    }
    return k;
}

std::int64_t poisson_ptrs(double rate, Rng& rng) {
    // Hörmann (1993) transformed rejection with squeeze.
    const double slam = std::sqrt(rate);
    const double loglam = std::log(rate);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    while (true) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2.0 * a / us + b) * u + rate + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
            -rate + k * loglam - specfun::ln_gamma(k + 1.0)) {
            return static_cast<std::int64_t>(k);
        }
    }
}

}  // namespace

double gamma_sample(const GammaParams& params, Rng& rng) {
    params.validate();
    if (params.shape >= 1.0) return standard_gamma_mt(params.shape, rng) / params.rate;
    const double g = standard_gamma_mt(params.shape + 1.0, rng);
    const double u = rng.uniform();
    return g * std::pow(u, 1.0 / params.shape) / params.rate;
}

std::int64_t poisson_sample(double rate, Rng& rng) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) {
        std::ostringstream os;
        os << "poisson_sample: rate must be finite and non-negative (rate=" << rate << ")";
        throw DomainError(os.str());
    }
    if (rate == 0.0) return 0;
    if (rate < 30.0) return poisson_inversion(rate, rng);
    return poisson_ptrs(rate, rng);
}

double poisson_log_pmf(double rate, std::int64_t k) {
    if (!(rate >= 0.0) || k < 0) throw DomainError("poisson_log_pmf: invalid arguments");
    if (rate == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double kd = static_cast<double>(k);
    return kd * std::log(rate) - rate - specfun::ln_gamma(kd + 1.0);
}

}  // namespace enfc
