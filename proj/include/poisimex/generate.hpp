#pragma once

#include <cstdint>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/rng.hpp"
#include "poisimex/sampling.hpp"
#include "poisimex/types.hpp"

namespace poisimex {

/// Data-generating process: X ~ Gamma(x_shape, x_scale), Z columns
/// ~ Uniform(z_low, z_high), eps ~ N(0, sigma_eps^2),
/// y = beta0 + beta_x X + Z beta_z + eps, W | X ~ Poisson(X A).
struct GenerationConfig {
    std::size_t n = 0;
    CoefficientVector beta;              // residual_variance ignored here
    double sigma_eps = 1.0;
    double x_shape = 1.0;
    double x_scale = 1.0;
    double z_low = 0.0;
    double z_high = 1.0;
    std::vector<double> area{1.0};       // size 1: constant; size n: per subject
};

inline void validate_generation_config(const GenerationConfig& cfg) {
    if (cfg.n < 2) throw InvalidParameter("generation: n must be >= 2");
    if (!(cfg.sigma_eps > 0.0)) throw InvalidParameter("generation: sigma_eps must be > 0");
    if (!(cfg.x_shape > 0.0)) throw InvalidParameter("generation: x_shape must be > 0");
    if (!(cfg.x_scale > 0.0)) throw InvalidParameter("generation: x_scale must be > 0");
    if (!cfg.beta.beta_z.empty() && !(cfg.z_low < cfg.z_high)) {
        throw InvalidParameter("generation: z_low must be < z_high");
    }
    if (cfg.area.empty() || (cfg.area.size() != 1 && cfg.area.size() != cfg.n)) {
        throw InvalidParameter("generation: area must be a constant or one value per subject");
    }
    for (double a : cfg.area) {
        if (!(a > 0.0)) throw InvalidParameter("generation: areas must be > 0");
    }
}

/// Draws one synthetic dataset. Deterministic in (cfg, stream): each
/// component consumes a fixed sub-stream (0 X, 1 Z, 2 eps, 3 W).
inline Dataset generate_dataset(const GenerationConfig& cfg, RngStream stream) {
    validate_generation_config(cfg);
    const std::size_t n = cfg.n;
    const std::size_t p = cfg.beta.beta_z.size();

    RngStream x_stream = stream.child(0);
    std::vector<double> x = sample_gamma(x_stream, cfg.x_shape, cfg.x_scale, n);

    Matrix z(n, p);
    RngStream z_root = stream.child(1);
    for (std::size_t j = 0; j < p; ++j) {
        RngStream zj = z_root.child(j);
        std::vector<double> col = sample_uniform(zj, cfg.z_low, cfg.z_high, n);
        for (std::size_t i = 0; i < n; ++i) z(i, j) = col[i];
    }

    RngStream e_stream = stream.child(2);
    std::vector<double> eps = sample_normal(e_stream, 0.0, cfg.sigma_eps, n);

    Dataset ds;
    ds.a.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.a[i] = cfg.area.size() == 1 ? cfg.area[0] : cfg.area[i];
    }
    ds.z = std::move(z);

    CoefficientVector beta = cfg.beta;
    beta.residual_variance = cfg.sigma_eps * cfg.sigma_eps;
    ds.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.y[i] = linear_predictor(beta, x[i], ds.z_row(i)) + eps[i];
    }

    RngStream w_stream = stream.child(3);
    ds.w.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.w[i] = sample_poisson(w_stream, x[i] * ds.a[i]);
    }

    ds.truth = GenerationTruth{std::move(x), std::move(eps), std::move(beta)};
    return ds;
}

} // namespace poisimex
