#pragma once

// Univariate and bivariate standard normal utilities.

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/erf.hpp>

#include "dualdose/trial_core.hpp"

namespace dualdose {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse of normal_cdf for p in (0, 1).
inline double normal_quantile(double p) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

//---------------------------------------------------------------------------//
/*!
 * Pr(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation rho.
 *
 * Gauss-Legendre quadrature of the Plackett/Drezner-Wesolowsky integral with
 * the point count chosen by |rho|, and the asymptotic expansion of Genz
 * (2004) for |rho| >= 0.925. Absolute accuracy is about 1e-15.
 */
inline double bvn_cdf(double h, double k, double rho) {
    if (!(std::abs(rho) < 1.0)) throw DesignError("bvn_cdf: correlation must lie in (-1, 1)");

    static constexpr std::array<std::array<double, 10>, 3> x = {{
        {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
        {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
         -0.3678314989981802, -0.1252334085114692},
        {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
         -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
         -0.2277858511416451, -0.07652652113349733},
    }};
    static constexpr std::array<std::array<double, 10>, 3> w = {{
        {0.1713244923791705, 0.3607615730481384, 0.4679139345726904},
        {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
         0.2334925365383547, 0.2491470458134029},
        {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
         0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
         0.1491729864726037, 0.1527533871307259},
    }};

    constexpr double two_pi = 2.0 * std::numbers::pi;
    int ng = 0;
    int lg = 3;
    if (std::abs(rho) >= 0.75) { ng = 2; lg = 10; }
    else if (std::abs(rho) >= 0.3) { ng = 1; lg = 6; }

    // Upper orthant Pr(X > dh, Y > dk) evaluated at (-h, -k).
    double dh = -h;
    double dk = -k;
    double hk = dh * dk;
    double bvn = 0.0;
    if (std::abs(rho) < 0.925) {
        const double hs = (dh * dh + dk * dk) / 2.0;
        const double asr = std::asin(rho);
        for (int i = 0; i < lg; ++i) {
            double sn = std::sin(asr * (x[ng][i] + 1.0) / 2.0);
            bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (-x[ng][i] + 1.0) / 2.0);
            bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return std::clamp(bvn * asr / (2.0 * two_pi) + normal_cdf(-dh) * normal_cdf(-dk), 0.0, 1.0);
    }

    if (rho < 0.0) {
        dk = -dk;
        hk = -hk;
    }
    const double as = (1.0 - rho) * (1.0 + rho);
    double a = std::sqrt(as);
    const double bs = (dh - dk) * (dh - dk);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
        const double b = std::sqrt(bs);
        bvn -= std::exp(-hk / 2.0) * std::sqrt(two_pi) * normal_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < lg; ++i) {
        double xs = (a * (x[ng][i] + 1.0)) * (a * (x[ng][i] + 1.0));
        double rs = std::sqrt(1.0 - xs);
        bvn += a * w[ng][i] *
               (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
                std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
        xs = as * (-x[ng][i] + 1.0) * (-x[ng][i] + 1.0) / 4.0;
        rs = std::sqrt(1.0 - xs);
        bvn += a * w[ng][i] * std::exp(-(bs / xs + hk) / 2.0) *
               (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / two_pi;

    if (rho > 0.0) {
        bvn += normal_cdf(-std::max(dh, dk));
    } else {
        bvn = -bvn;
        if (dk > dh) {
            if (dh < 0.0) bvn += normal_cdf(dk) - normal_cdf(dh);
            else bvn += normal_cdf(-dh) - normal_cdf(-dk);
        }
    }
    return std::clamp(bvn, 0.0, 1.0);
}

//---------------------------------------------------------------------------//
// Truncated normal sampling
//---------------------------------------------------------------------------//
namespace detail {

// Robert (1995) exponential rejection for Z >= a with a large.
template <class Rng>
double sample_tail(double a, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double lambda = (a + std::sqrt(a * a + 4.0)) / 2.0;
    for (;;) {
        const double z = a - std::log1p(-unif(rng)) / lambda;
        const double g = std::exp(-(z - lambda) * (z - lambda) / 2.0);
        if (unif(rng) <= g) return z;
    }
}

}  // namespace detail

/// Standard normal conditioned on Z >= a.
template <class Rng>
double sample_normal_above(double a, Rng& rng) {
    if (a > 6.0) return detail::sample_tail(a, rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double tail = normal_cdf(-a);
    double u = unif(rng) * tail;
    if (u <= 0.0) u = tail * 1e-12;
    return std::max(a, -normal_quantile(u));
}

/// Standard normal conditioned on Z < b.
template <class Rng>
double sample_normal_below(double b, Rng& rng) {
    return -sample_normal_above(-b, rng);
}

/// N(mean, sd^2) conditioned on the sign region: x >= 0 when `positive`,
/// x < 0 otherwise.
template <class Rng>
double sample_signed_normal(double mean, double sd, bool positive, Rng& rng) {
    const double bound = -mean / sd;
    const double z = positive ? sample_normal_above(bound, rng) : sample_normal_below(bound, rng);
    return mean + sd * z;
}

}  // namespace dualdose
