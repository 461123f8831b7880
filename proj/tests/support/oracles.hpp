#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace enfc::testing {

// Expected first-passage month of a single site enrolling Poisson(rate) per
// month from month one, censored at `cap` months. Dynamic programming over
// the distribution of the cumulative count below the target.
inline double first_passage_mean_dp(double rate, std::int64_t target, int cap) {
    const auto n = static_cast<std::size_t>(target);
    // Poisson pmf for increments 0..n-1; larger jumps always cross.
    std::vector<double> pmf(n);
    pmf[0] = std::exp(-rate);
    for (std::size_t k = 1; k < n; ++k) pmf[k] = pmf[k - 1] * rate / static_cast<double>(k);

    std::vector<double> alive(n, 0.0);  // P(count == k and not yet crossed)
    alive[0] = 1.0;
    double expected = 0.0;
    for (int t = 0; t < cap; ++t) {
        double survive = 0.0;
        for (double p : alive) survive += p;
        expected += survive;  // E[D] = sum_t P(D > t)
        std::vector<double> next(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            if (alive[k] == 0.0) continue;
            for (std::size_t j = 0; k + j < n; ++j) next[k + j] += alive[k] * pmf[j];
        }
        alive.swap(next);
    }
    return expected;
}

}  // namespace enfc::testing
