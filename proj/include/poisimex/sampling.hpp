#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/rng.hpp"

namespace poisimex {

namespace detail {

/// One pair of independent N(0,1) draws (Box-Muller). Consumes exactly two
/// uniforms, which keeps stream usage predictable.
inline void normal_pair(RngStream& stream, double& z0, double& z1) {
    const double u1 = stream.next_double_pos();
    const double u2 = stream.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    z0 = r * std::cos(t);
    z1 = r * std::sin(t);
}

/// Single N(0,1) draw; uses the cosine branch only.
inline double normal_one(RngStream& stream) {
    const double u1 = stream.next_double_pos();
    const double u2 = stream.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Marsaglia-Tsang squeeze sampler for Gamma(shape, 1) with shape >= 1.
inline double gamma_mt(RngStream& stream, double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal_one(stream);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = stream.next_double_pos();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

} // namespace detail

/// n i.i.d. Uniform(lo, hi) draws, all in [lo, hi).
inline std::vector<double> sample_uniform(RngStream& stream, double lo, double hi,
                                          std::size_t n) {
    if (!(lo < hi)) throw InvalidParameter("sample_uniform: lo must be < hi");
    std::vector<double> out(n);
    for (auto& v : out) v = lo + (hi - lo) * stream.next_double();
    return out;
}

/// n i.i.d. N(mu, sd^2) draws; sd = 0 yields the constant mu.
inline std::vector<double> sample_normal(RngStream& stream, double mu, double sd,
                                         std::size_t n) {
    if (!(sd >= 0.0)) throw InvalidParameter("sample_normal: sd must be >= 0");
    std::vector<double> out(n);
    if (sd == 0.0) {
        for (auto& v : out) v = mu;
        return out;
    }
    std::size_t i = 0;
    double z0, z1;
    for (; i + 1 < n; i += 2) {
        detail::normal_pair(stream, z0, z1);
        out[i] = mu + sd * z0;
        out[i + 1] = mu + sd * z1;
    }
    if (i < n) out[i] = mu + sd * detail::normal_one(stream);
    return out;
}

/// n i.i.d. Gamma(shape, scale) draws. Shape 1 reduces to inversion of the
/// exponential; shape < 1 is boosted through Gamma(shape + 1).
inline std::vector<double> sample_gamma(RngStream& stream, double shape, double scale,
                                        std::size_t n) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
        throw InvalidParameter("sample_gamma: shape must be > 0");
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw InvalidParameter("sample_gamma: scale must be > 0");
    }
    std::vector<double> out(n);
    if (shape == 1.0) {
        for (auto& v : out) v = -scale * std::log(stream.next_double_pos());
    } else if (shape > 1.0) {
        for (auto& v : out) v = scale * detail::gamma_mt(stream, shape);
    } else {
        const double inv_shape = 1.0 / shape;
        for (auto& v : out) {
            const double g = detail::gamma_mt(stream, shape + 1.0);
            const double u = stream.next_double_pos();
            v = scale * g * std::pow(u, inv_shape);
        }
    }
    return out;
}

/// One Poisson(mean) draw. Inversion by sequential search below mean 30,
/// Hoermann's PTRS transformed rejection above.
inline std::int64_t sample_poisson(RngStream& stream, double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw InvalidParameter("sample_poisson: mean must be >= 0 and finite");
    }
    if (mean == 0.0) return 0;
    if (mean < 30.0) {
        const double u = stream.next_double();
        double p = std::exp(-mean);
        double cdf = p;
        std::int64_t k = 0;
        // u < 1, and the CDF reaches 1 - 1e-13 well before the cap.
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = stream.next_double() - 0.5;
        const double v = stream.next_double_pos();
        const double us = 0.5 - std::abs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            kf * log_mean - mean - std::lgamma(kf + 1.0)) {
            return static_cast<std::int64_t>(kf);
        }
    }
}

} // namespace poisimex
