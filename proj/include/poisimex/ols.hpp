#pragma once

#include <span>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/linalg.hpp"
#include "poisimex/types.hpp"

namespace poisimex {

namespace detail {

/// Reusable buffers for the normal-equations fit; avoids reallocating in
/// the SIMEX inner loop.
struct OlsWorkspace {
    std::vector<double> xtx;
    std::vector<double> xty;
};

/// Least squares on the design [1, surrogate, z] via normal equations and
/// an LDL^T solve. k = p + 2 coefficients; residual_variance = RSS/(n-p-2).
inline CoefficientVector ols_fit_ws(std::span<const double> surrogate, const Matrix& z,
                                    std::span<const double> y, OlsWorkspace& ws) {
    const std::size_t n = surrogate.size();
    const std::size_t p = z.cols;
    const std::size_t k = p + 2;
    if (y.size() != n || z.rows != n) {
        throw DimensionMismatch("ols_fit: surrogate, z and y lengths differ");
    }
    if (n <= k) {
        throw InvalidParameter("ols_fit: need n > p + 2 observations");
    }

    ws.xtx.assign(k * k, 0.0);
    ws.xty.assign(k, 0.0);
    double* g = ws.xtx.data();
    double* h = ws.xty.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = surrogate[i];
        const double yi = y[i];
        const double* zr = z.data.data() + i * p;
        g[0] += 1.0;
        g[k] += v;          // (1,0)
        g[k + 1] += v * v;  // (1,1)
        h[0] += yi;
        h[1] += v * yi;
        for (std::size_t j = 0; j < p; ++j) {
            const double zj = zr[j];
            g[(j + 2) * k] += zj;
            g[(j + 2) * k + 1] += v * zj;
            for (std::size_t m = 0; m <= j; ++m) {
                g[(j + 2) * k + (m + 2)] += zj * zr[m];
            }
            h[j + 2] += zj * yi;
        }
    }
    solve_spd_inplace(ws.xtx, ws.xty, k);

    CoefficientVector out;
    out.intercept = h[0];
    out.beta_x = h[1];
    out.beta_z.assign(h + 2, h + k);

    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fit = out.intercept + out.beta_x * surrogate[i];
        const double* zr = z.data.data() + i * p;
        for (std::size_t j = 0; j < p; ++j) fit += out.beta_z[j] * zr[j];
        const double r = y[i] - fit;
        rss += r * r;
    }
    out.residual_variance = rss / static_cast<double>(n - k);
    return out;
}

} // namespace detail

/// Ordinary least squares of y on [1, surrogate, z].
inline CoefficientVector ols_fit(std::span<const double> surrogate, const Matrix& z,
                                 std::span<const double> y) {
    detail::OlsWorkspace ws;
    return detail::ols_fit_ws(surrogate, z, y, ws);
}

inline CoefficientVector ols_fit(std::span<const double> surrogate,
                                 std::span<const double> y) {
    Matrix z(surrogate.size(), 0);
    return ols_fit(surrogate, z, y);
}

/// The uncorrected baseline: OLS with the observed density w/a as covariate.
inline CoefficientVector naive_fit(const Dataset& ds) {
    return ols_fit(ds.densities(), ds.z, ds.y);
}

} // namespace poisimex
