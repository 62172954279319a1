#include <algorithm>
#include <array>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "dualdose/isotonic.hpp"

using namespace dualdose;

namespace {

double weighted_mean(const std::array<double, 3>& v, const std::array<double, 3>& w, std::size_t lo, std::size_t hi) {
    double s = 0.0, t = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        s += v[i] * w[i];
        t += w[i];
    }
    return s / t;
}

// Exhaustive oracle for three doses: every ordered partition into
// contiguous blocks, each block at its weighted mean; keep the monotone
// candidates and return the one with least weighted squared error.
std::array<double, 3> brute_force(const std::array<double, 3>& v, const std::array<double, 3>& w) {
    const std::vector<std::vector<std::size_t>> cuts = {{0, 1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 3}};
    double best_err = std::numeric_limits<double>::infinity();
    std::array<double, 3> best{};
    for (const auto& c : cuts) {
        std::array<double, 3> fit{};
        for (std::size_t b = 0; b + 1 < c.size(); ++b) {
            const double m = weighted_mean(v, w, c[b], c[b + 1]);
            for (std::size_t i = c[b]; i < c[b + 1]; ++i) fit[i] = m;
        }
        if (!(fit[0] <= fit[1] + 1e-15 && fit[1] <= fit[2] + 1e-15)) continue;
        double err = 0.0;
        for (std::size_t i = 0; i < 3; ++i) err += w[i] * (fit[i] - v[i]) * (fit[i] - v[i]);
        if (err < best_err) {
            best_err = err;
            best = fit;
        }
    }
    return best;
}

}  // namespace

TEST(Pava, MonotoneInputUnchanged) {
    const std::vector<double> v = {0.05, 0.1, 0.1, 0.3, 0.6};
    const std::vector<double> w = {3, 6, 1, 2, 9};
    EXPECT_EQ(pava_isotonic(v, w), v);
}

TEST(Pava, TwoPointPool) {
    const std::vector<double> v = {0.4, 0.2};
    const std::vector<double> w = {3, 3};
    const auto out = pava_isotonic(v, w);
    EXPECT_NEAR(out[0], 0.3, 1e-15);
    EXPECT_NEAR(out[1], 0.3, 1e-15);
}

TEST(Pava, WeightedPoolCarriesWeightedMean) {
    const std::vector<double> v = {0.1, 0.5, 0.2, 0.4};
    const std::vector<double> w = {2, 1, 3, 4};
    const auto out = pava_isotonic(v, w);
    EXPECT_NEAR(out[1], (0.5 * 1 + 0.2 * 3) / 4.0, 1e-15);
    EXPECT_NEAR(out[2], out[1], 1e-15);
}

TEST(Pava, MatchesBruteForceOracleOnRandomThreeDoseInstances) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    std::uniform_int_distribution<int> wt(1, 12);
    for (int rep = 0; rep < 1000; ++rep) {
        std::array<double, 3> v{}, w{};
        for (int i = 0; i < 3; ++i) {
            v[i] = val(rng);
            w[i] = wt(rng);
        }
        const auto oracle = brute_force(v, w);
        const auto got = pava_isotonic(std::vector<double>(v.begin(), v.end()), std::vector<double>(w.begin(), w.end()));
        for (int i = 0; i < 3; ++i) ASSERT_NEAR(got[i], oracle[i], 1e-6) << "instance " << rep;
    }
}

TEST(Pava, IdempotentNondecreasingAndScaleInvariant) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> val(0.0, 1.0), wt(0.5, 10.0), scale(0.1, 50.0);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t n = 1 + rep % 7;
        std::vector<double> v(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = val(rng);
            w[i] = wt(rng);
        }
        const auto once = pava_isotonic(v, w);
        ASSERT_TRUE(std::is_sorted(once.begin(), once.end()));
        const auto twice = pava_isotonic(once, w);
        for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(once[i], twice[i], 1e-12);
        const double c = scale(rng);
        std::vector<double> ws(w);
        for (double& x : ws) x *= c;
        const auto scaled = pava_isotonic(v, ws);
        for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(once[i], scaled[i], 1e-12);
    }
}

TEST(Pava, RejectsBadInput) {
    const std::vector<double> v = {0.1, 0.2};
    EXPECT_THROW(pava_isotonic(v, std::vector<double>{1.0}), DesignError);
    EXPECT_THROW(pava_isotonic(v, std::vector<double>{1.0, 0.0}), DesignError);
    EXPECT_TRUE(pava_isotonic(std::vector<double>{}, std::vector<double>{}).empty());
}
