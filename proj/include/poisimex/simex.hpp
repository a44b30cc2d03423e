#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/format.hpp"
#include "poisimex/ols.hpp"
#include "poisimex/rng.hpp"
#include "poisimex/sampling.hpp"
#include "poisimex/types.hpp"

namespace poisimex {

enum class Extrapolant { linear, quadratic, rational };

inline std::string extrapolant_name(Extrapolant e) {
    switch (e) {
        case Extrapolant::linear: return "linear";
        case Extrapolant::quadratic: return "quadratic";
        case Extrapolant::rational: return "rational";
    }
    return "?";
}

inline Extrapolant parse_extrapolant(const std::string& s) {
    if (s == "linear") return Extrapolant::linear;
    if (s == "quadratic") return Extrapolant::quadratic;
    if (s == "rational") return Extrapolant::rational;
    throw InvalidParameter("unknown extrapolant '" + s + "'");
}

/// How the pseudo-error variance is obtained. `estimated` uses the
/// single-replicate estimator Vbar/a_i; `known` takes a density-scale
/// variance (constant areas only); `known_vector` gives it per subject.
struct VarianceMode {
    enum class Kind { estimated, known, known_vector };
    Kind kind = Kind::estimated;
    double sigma2 = 0.0;
    std::vector<double> sigma2_per_subject;

    static VarianceMode estimated() { return {}; }
    static VarianceMode known(double s2) {
        VarianceMode m;
        m.kind = Kind::known;
        m.sigma2 = s2;
        return m;
    }
    static VarianceMode known_vector(std::vector<double> s2) {
        VarianceMode m;
        m.kind = Kind::known_vector;
        m.sigma2_per_subject = std::move(s2);
        return m;
    }
};

/// Whether pseudo-errors are added to the density w/a (default) or to the
/// raw count before dividing by the area. Identical when all areas are 1.
enum class PerturbScale { density, count };

struct SimexConfig {
    std::vector<double> lambda_grid{0.0, 0.5, 1.0, 1.5, 2.0};
    std::size_t b_reps = 100;
    Extrapolant extrapolant = Extrapolant::quadratic;
    VarianceMode variance_mode{};
    std::vector<std::uint64_t> seed_path;
    PerturbScale perturb_scale = PerturbScale::density;
    bool keep_raw = false;
};

/// Per-lambda averaged coefficient estimates.
struct SimexProfile {
    std::vector<double> lambdas;
    std::vector<CoefficientVector> mean_estimates;
    /// raw_estimates[b][k] when keep_raw was set; empty otherwise.
    std::vector<std::vector<CoefficientVector>> raw_estimates;
    /// All pseudo-error scales were zero; SIMEX collapses to the naive fit.
    bool degenerate_sigma = false;
};

struct ExtrapolantFit {
    Extrapolant kind = Extrapolant::linear;
    std::vector<double> params; // linear a+b*l; quadratic a+b*l+c*l^2; rational a+b/(c+l)
    double rss = 0.0;
    bool converged = true;
    bool fallback_used = false;
};

struct SimexEstimate {
    CoefficientVector coefficients; // extrapolated to lambda = -1
    CoefficientVector naive;
    SimexProfile profile;
    std::vector<ExtrapolantFit> fits; // intercept, beta_x, beta_z1, ...
    std::vector<double> sigma_hat;    // per-subject pseudo-error scale
};

/// sigma_i^2 = Vbar / a_i with V_i = w_i / a_i: the single-replicate
/// estimator of Var[w_i/a_i - x_i] under the conditional Poisson model.
inline std::vector<double> estimate_error_variances(const Dataset& ds) {
    const std::size_t n = ds.n();
    if (n < 1) throw EmptyInput("estimate_error_variances: empty dataset");
    double vbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(ds.a[i] > 0.0)) throw InvalidParameter("areas must be > 0");
        vbar += static_cast<double>(ds.w[i]) / ds.a[i];
    }
    vbar /= static_cast<double>(n);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = vbar / ds.a[i];
    return out;
}

namespace detail {

inline std::vector<double> resolve_sigma2(const ObservedView& view, const VarianceMode& mode) {
    const std::size_t n = view.n();
    switch (mode.kind) {
        case VarianceMode::Kind::estimated: {
            double vbar = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                vbar += static_cast<double>(view.w[i]) / view.a[i];
            }
            vbar /= static_cast<double>(n);
            std::vector<double> out(n);
            for (std::size_t i = 0; i < n; ++i) out[i] = vbar / view.a[i];
            return out;
        }
        case VarianceMode::Kind::known: {
            if (!(mode.sigma2 >= 0.0) || !std::isfinite(mode.sigma2)) {
                throw InvalidParameter("known variance must be >= 0 and finite");
            }
            for (std::size_t i = 1; i < n; ++i) {
                if (view.a[i] != view.a[0]) {
                    throw InvalidParameter(
                        "known scalar variance requires constant areas; use a per-subject vector");
                }
            }
            return std::vector<double>(n, mode.sigma2);
        }
        case VarianceMode::Kind::known_vector: {
            if (mode.sigma2_per_subject.size() != n) {
                throw DimensionMismatch("per-subject variance vector length mismatch");
            }
            for (double s2 : mode.sigma2_per_subject) {
                if (!(s2 >= 0.0) || !std::isfinite(s2)) {
                    throw InvalidParameter("per-subject variances must be >= 0 and finite");
                }
            }
            return mode.sigma2_per_subject;
        }
    }
    throw InvalidParameter("unreachable variance mode");
}

/// Fills buf with the perturbed surrogate for one pseudo-replicate.
/// Standard normals are drawn pairwise from the stream.
inline void perturb_into(std::vector<double>& buf, const ObservedView& view,
                         std::span<const double> v, double sqrt_lambda,
                         std::span<const double> sigma_hat, RngStream& stream,
                         PerturbScale scale) {
    const std::size_t n = v.size();
    buf.resize(n);
    std::size_t i = 0;
    double z0, z1;
    if (scale == PerturbScale::density) {
        for (; i + 1 < n; i += 2) {
            normal_pair(stream, z0, z1);
            buf[i] = v[i] + sqrt_lambda * sigma_hat[i] * z0;
            buf[i + 1] = v[i + 1] + sqrt_lambda * sigma_hat[i + 1] * z1;
        }
        if (i < n) buf[i] = v[i] + sqrt_lambda * sigma_hat[i] * normal_one(stream);
    } else {
        for (; i + 1 < n; i += 2) {
            normal_pair(stream, z0, z1);
            buf[i] = (static_cast<double>(view.w[i]) + sqrt_lambda * sigma_hat[i] * z0) / view.a[i];
            buf[i + 1] =
                (static_cast<double>(view.w[i + 1]) + sqrt_lambda * sigma_hat[i + 1] * z1) / view.a[i + 1];
        }
        if (i < n) {
            buf[i] =
                (static_cast<double>(view.w[i]) + sqrt_lambda * sigma_hat[i] * normal_one(stream)) / view.a[i];
        }
    }
}

inline void validate_lambda_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidParameter("lambda grid is empty");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k] >= 0.0) || !std::isfinite(grid[k])) {
            throw InvalidParameter("lambda grid values must be >= 0 and finite");
        }
        if (k > 0 && !(grid[k] > grid[k - 1])) {
            throw InvalidParameter("lambda grid must be strictly increasing");
        }
    }
}

inline SimexProfile simex_profile_impl(const ObservedView& view, const SimexConfig& cfg,
                                       RngStream stream, std::span<const double> sigma_hat) {
    validate_lambda_grid(cfg.lambda_grid);
    if (cfg.b_reps < 1) throw InvalidParameter("b_reps must be >= 1");

    const std::size_t p = view.p();
    const std::size_t ncoef = p + 2;
    const std::size_t B = cfg.b_reps;

    std::vector<double> v(view.n());
    for (std::size_t i = 0; i < view.n(); ++i) {
        v[i] = static_cast<double>(view.w[i]) / view.a[i];
    }

    RngStream base = stream;
    for (std::uint64_t e : cfg.seed_path) base = base.child(e);

    SimexProfile profile;
    profile.lambdas = cfg.lambda_grid;
    profile.mean_estimates.resize(cfg.lambda_grid.size());
    if (cfg.keep_raw) {
        profile.raw_estimates.assign(B, std::vector<CoefficientVector>(cfg.lambda_grid.size()));
    }
    profile.degenerate_sigma =
        std::all_of(sigma_hat.begin(), sigma_hat.end(), [](double s) { return s == 0.0; });

    OlsWorkspace ws;
    std::vector<double> buf;
    std::vector<double> sums(ncoef + 1);
    for (std::size_t k = 0; k < cfg.lambda_grid.size(); ++k) {
        const double lambda = cfg.lambda_grid[k];
        if (lambda == 0.0) {
            // No pseudo-error: every replicate is the naive fit, bitwise.
            const CoefficientVector fit = ols_fit_ws(v, *view.z, view.y, ws);
            profile.mean_estimates[k] = fit;
            if (cfg.keep_raw) {
                for (std::size_t b = 0; b < B; ++b) profile.raw_estimates[b][k] = fit;
            }
            continue;
        }
        const double sqrt_lambda = std::sqrt(lambda);
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            RngStream sub = base.child(k).child(b);
            perturb_into(buf, view, v, sqrt_lambda, sigma_hat, sub, cfg.perturb_scale);
            CoefficientVector fit;
            try {
                fit = ols_fit_ws(buf, *view.z, view.y, ws);
            } catch (const RankDeficient& e) {
                throw RankDeficient(std::string(e.what()) + " in pseudo-replicate (lambda=" +
                                    fmt_g6(lambda) + ", b=" + std::to_string(b) + ")");
            }
            for (std::size_t j = 0; j < ncoef; ++j) sums[j] += fit.coef(j);
            sums[ncoef] += fit.residual_variance;
            if (cfg.keep_raw) profile.raw_estimates[b][k] = std::move(fit);
        }
        CoefficientVector mean;
        mean.beta_z.resize(p);
        const double inv_b = 1.0 / static_cast<double>(B);
        for (std::size_t j = 0; j < ncoef; ++j) mean.coef(j) = sums[j] * inv_b;
        mean.residual_variance = sums[ncoef] * inv_b;
        profile.mean_estimates[k] = std::move(mean);
    }
    return profile;
}

} // namespace detail

/// v_i + sqrt(lambda) * sigma_i * u_i with fresh standard normals from the
/// stream; lambda = 0 returns v unchanged.
inline std::vector<double> perturb_surrogate(std::span<const double> v, double lambda,
                                             std::span<const double> sigma_hat,
                                             RngStream& stream) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidParameter("perturb_surrogate: lambda must be >= 0");
    }
    if (sigma_hat.size() != v.size()) {
        throw DimensionMismatch("perturb_surrogate: sigma_hat length mismatch");
    }
    std::vector<double> out(v.begin(), v.end());
    if (lambda == 0.0) return out;
    const double sqrt_lambda = std::sqrt(lambda);
    std::size_t i = 0;
    double z0, z1;
    const std::size_t n = v.size();
    for (; i + 1 < n; i += 2) {
        detail::normal_pair(stream, z0, z1);
        out[i] += sqrt_lambda * sigma_hat[i] * z0;
        out[i + 1] += sqrt_lambda * sigma_hat[i + 1] * z1;
    }
    if (i < n) out[i] += sqrt_lambda * sigma_hat[i] * detail::normal_one(stream);
    return out;
}

/// Runs the simulation and estimation steps over the lambda grid; entry k
/// averages the OLS estimates of the B perturbed designs at lambda_grid[k].
inline SimexProfile simex_profile(const Dataset& ds, const SimexConfig& cfg, RngStream stream) {
    validate_dataset(ds);
    const auto view = detail::observed(ds);
    const std::vector<double> sigma2 = detail::resolve_sigma2(view, cfg.variance_mode);
    std::vector<double> sigma_hat(sigma2.size());
    for (std::size_t i = 0; i < sigma2.size(); ++i) sigma_hat[i] = std::sqrt(sigma2[i]);
    return detail::simex_profile_impl(view, cfg, stream, sigma_hat);
}

namespace detail {

struct PolyFit {
    std::vector<double> params;
    double rss = 0.0;
};

/// Exact least-squares polynomial fit (degree 1 or 2) on (lambda, y).
inline PolyFit fit_polynomial(std::span<const double> lams, std::span<const double> ys,
                              std::size_t degree) {
    const std::size_t k = degree + 1;
    std::vector<double> g(k * k, 0.0), h(k, 0.0);
    for (std::size_t i = 0; i < lams.size(); ++i) {
        double pow_cache[5] = {1.0, 0.0, 0.0, 0.0, 0.0};
        for (std::size_t d = 1; d <= 2 * degree; ++d) pow_cache[d] = pow_cache[d - 1] * lams[i];
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c <= r; ++c) g[r * k + c] += pow_cache[r + c];
            h[r] += pow_cache[r] * ys[i];
        }
    }
    solve_spd_inplace(g, h, k);
    PolyFit fit;
    fit.params.assign(h.begin(), h.end());
    for (std::size_t i = 0; i < lams.size(); ++i) {
        double f = 0.0;
        for (std::size_t d = k; d-- > 0;) f = f * lams[i] + fit.params[d];
        const double r = ys[i] - f;
        fit.rss += r * r;
    }
    return fit;
}

struct RationalFit {
    double a = 0.0, b = 0.0, c = 0.0;
    double rss = 0.0;
    bool converged = false;
};

inline double rational_rss(std::span<const double> lams, std::span<const double> ys,
                           double a, double b, double c) {
    double rss = 0.0;
    for (std::size_t i = 0; i < lams.size(); ++i) {
        const double den = c + lams[i];
        if (std::abs(den) < 1e-12) return std::numeric_limits<double>::infinity();
        const double r = a + b / den - ys[i];
        rss += r * r;
    }
    return std::isfinite(rss) ? rss : std::numeric_limits<double>::infinity();
}

/// Damped Gauss-Newton fit of a + b/(c + lambda). The data are normalized
/// by max|y| first, which conditions the problem and makes the whole
/// iteration invariant under scaling of y. RSS is non-increasing across
/// accepted steps; stops on relative RSS change or parameter step < 1e-10.
inline RationalFit fit_rational(std::span<const double> lams, std::span<const double> ys) {
    const std::size_t m = lams.size();
    const double lam_min = lams.front();
    const double lam_max = lams.back();

    double scale = 0.0;
    for (double y : ys) scale = std::max(scale, std::abs(y));
    RationalFit out;
    if (scale == 0.0) {
        out.c = lam_max - lam_min + 2.0;
        out.converged = true;
        return out;
    }
    std::vector<double> yn(ys.size());
    for (std::size_t i = 0; i < m; ++i) yn[i] = ys[i] / scale;

    // Initial guess: asymptote from the quadratic fit past the grid, c from
    // the grid span, b matched at the first grid point.
    const PolyFit quad = fit_polynomial(lams, yn, 2);
    const double far = lam_max + 5.0;
    double a = (quad.params[2] * far + quad.params[1]) * far + quad.params[0];
    double c = 1.0 + (lam_max - lam_min);
    double b = (yn[0] - a) * (c + lams[0]);

    double rss = rational_rss(lams, yn, a, b, c);
    bool converged = false;
    if (std::isfinite(rss)) {
        std::vector<double> jtj(9), jtr(3);
        for (int iter = 0; iter < 200; ++iter) {
            std::fill(jtj.begin(), jtj.end(), 0.0);
            std::fill(jtr.begin(), jtr.end(), 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                const double den = c + lams[i];
                const double inv = 1.0 / den;
                const double r = a + b * inv - yn[i];
                const double j0 = 1.0;
                const double j1 = inv;
                const double j2 = -b * inv * inv;
                jtj[0] += j0 * j0;
                jtj[3] += j1 * j0;
                jtj[4] += j1 * j1;
                jtj[6] += j2 * j0;
                jtj[7] += j2 * j1;
                jtj[8] += j2 * j2;
                jtr[0] += j0 * r;
                jtr[1] += j1 * r;
                jtr[2] += j2 * r;
            }
            std::vector<double> step = jtr;
            try {
                solve_spd_inplace(jtj, step, 3, 1e-14);
            } catch (const RankDeficient&) {
                break; // flat direction; no usable step
            }
            // Halve the Gauss-Newton step until RSS does not increase.
            double t = 1.0;
            double na = a, nb = b, nc = c, nrss = rss;
            bool accepted = false;
            for (int h = 0; h < 60; ++h) {
                const double ta = a - t * step[0];
                const double tb = b - t * step[1];
                const double tc = c - t * step[2];
                const double trss = rational_rss(lams, yn, ta, tb, tc);
                if (trss <= rss) {
                    na = ta;
                    nb = tb;
                    nc = tc;
                    nrss = trss;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;
            const double step_norm =
                t * std::max(std::abs(step[0]), std::max(std::abs(step[1]), std::abs(step[2])));
            const bool rss_settled = (rss - nrss) <= 1e-10 * std::max(rss, 1e-300);
            a = na;
            b = nb;
            c = nc;
            rss = nrss;
            if (rss_settled || step_norm < 1e-10 || rss == 0.0) {
                converged = true;
                break;
            }
        }
    }
    out.a = a * scale;
    out.b = b * scale;
    out.c = c;
    out.rss = rss * scale * scale;
    out.converged = converged && std::isfinite(out.a) && std::isfinite(out.b) && std::isfinite(out.c);
    return out;
}

} // namespace detail

/// Fits the chosen functional form to (lambda, coefficient) pairs from the
/// profile. coefficient_index: 0 intercept, 1 beta_x, 2+j beta_z[j].
/// A rational fit that fails to converge or puts its pole inside
/// [-1, max lambda] falls back to the quadratic fit.
inline ExtrapolantFit fit_extrapolant(const SimexProfile& profile, Extrapolant kind,
                                      std::size_t coefficient_index) {
    const std::size_t m = profile.lambdas.size();
    const std::size_t need = kind == Extrapolant::linear     ? 2
                             : kind == Extrapolant::quadratic ? 3
                                                              : 4; // rational: 3 params + 1
    if (m < need) {
        throw InsufficientGrid("lambda grid has " + std::to_string(m) + " points; " +
                               extrapolant_name(kind) + " extrapolant needs " +
                               std::to_string(need));
    }
    std::vector<double> ys(m);
    for (std::size_t k = 0; k < m; ++k) {
        ys[k] = profile.mean_estimates[k].coef(coefficient_index);
    }

    ExtrapolantFit fit;
    fit.kind = kind;
    if (kind == Extrapolant::linear || kind == Extrapolant::quadratic) {
        const auto poly =
            detail::fit_polynomial(profile.lambdas, ys, kind == Extrapolant::linear ? 1 : 2);
        fit.params = poly.params;
        fit.rss = poly.rss;
        return fit;
    }

    const auto rat = detail::fit_rational(profile.lambdas, ys);
    const double lam_max = profile.lambdas.back();
    // Pole lambda* = -c must stay outside [-1, lam_max] (tiny guard at -1).
    const bool pole_in_range = rat.c >= -lam_max && rat.c <= 1.0 + 1e-12;
    if (!rat.converged || pole_in_range) {
        const auto poly = detail::fit_polynomial(profile.lambdas, ys, 2);
        fit.kind = Extrapolant::quadratic;
        fit.params = poly.params;
        fit.rss = poly.rss;
        fit.converged = rat.converged;
        fit.fallback_used = true;
        return fit;
    }
    fit.params = {rat.a, rat.b, rat.c};
    fit.rss = rat.rss;
    fit.converged = true;
    return fit;
}

/// Evaluates the fitted extrapolation function at lambda = -1.
inline double extrapolate(const ExtrapolantFit& fit) {
    switch (fit.kind) {
        case Extrapolant::linear:
            if (fit.params.size() != 2) throw InvalidParameter("linear fit needs 2 params");
            return fit.params[0] - fit.params[1];
        case Extrapolant::quadratic:
            if (fit.params.size() != 3) throw InvalidParameter("quadratic fit needs 3 params");
            return fit.params[0] - fit.params[1] + fit.params[2];
        case Extrapolant::rational: {
            if (fit.params.size() != 3) throw InvalidParameter("rational fit needs 3 params");
            const double c = fit.params[2];
            if (std::abs(c - 1.0) <= 1e-12) {
                throw PoleAtTarget("rational extrapolant has a pole at lambda = -1");
            }
            return fit.params[0] + fit.params[1] / (c - 1.0);
        }
    }
    throw InvalidParameter("unreachable extrapolant kind");
}

inline void validate_simex_config(const SimexConfig& cfg) {
    detail::validate_lambda_grid(cfg.lambda_grid);
    const std::size_t min_points = cfg.extrapolant == Extrapolant::rational ? 4 : 3;
    if (cfg.lambda_grid.size() < min_points) {
        throw InsufficientGrid("lambda grid needs at least " + std::to_string(min_points) +
                               " points for the " + extrapolant_name(cfg.extrapolant) +
                               " extrapolant");
    }
    if (cfg.lambda_grid.front() != 0.0) {
        throw InvalidParameter("lambda grid must include 0");
    }
    if (cfg.b_reps < 1) throw InvalidParameter("b_reps must be >= 1");
}

/// The full POI-SIMEX estimator: error-variance estimation, pseudo-error
/// simulation over the lambda grid, per-coefficient curve fitting, and
/// extrapolation to lambda = -1.
inline SimexEstimate poi_simex(const Dataset& ds, const SimexConfig& cfg, RngStream stream) {
    validate_simex_config(cfg);
    validate_dataset(ds);
    const auto view = detail::observed(ds);

    SimexEstimate est;
    est.naive = naive_fit(ds);

    const std::vector<double> sigma2 = detail::resolve_sigma2(view, cfg.variance_mode);
    est.sigma_hat.resize(sigma2.size());
    for (std::size_t i = 0; i < sigma2.size(); ++i) est.sigma_hat[i] = std::sqrt(sigma2[i]);

    est.profile = detail::simex_profile_impl(view, cfg, stream, est.sigma_hat);

    const std::size_t ncoef = view.p() + 2;
    est.fits.reserve(ncoef);
    est.coefficients.beta_z.resize(view.p());
    for (std::size_t j = 0; j < ncoef; ++j) {
        est.fits.push_back(fit_extrapolant(est.profile, cfg.extrapolant, j));
        est.coefficients.coef(j) = extrapolate(est.fits.back());
    }
    est.coefficients.residual_variance = 0.0; // not extrapolated
    return est;
}

/// Large-sample limit of the slope estimate at pseudo-error level lambda:
/// beta1 * Var[X] / (Var[X] + (1 + lambda) * E[X]).
inline double attenuation_curve(const PopulationMoments& moments, double beta1, double lambda) {
    if (!(moments.mean_x > 0.0) || !std::isfinite(moments.mean_x)) {
        throw InvalidParameter("attenuation_curve: mean_x must be > 0");
    }
    if (!(moments.var_x >= 0.0) || !std::isfinite(moments.var_x)) {
        throw InvalidParameter("attenuation_curve: var_x must be >= 0");
    }
    if (!(lambda >= -1.0) || !std::isfinite(lambda)) {
        throw InvalidParameter("attenuation_curve: lambda must be >= -1");
    }
    const double denom = moments.var_x + (1.0 + lambda) * moments.mean_x;
    if (!(denom > 0.0)) {
        throw InvalidParameter("attenuation_curve: Var[X] + (1+lambda)E[X] must be > 0");
    }
    return beta1 * moments.var_x / denom;
}

} // namespace poisimex
