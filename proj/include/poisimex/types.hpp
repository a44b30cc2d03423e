#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/linalg.hpp"

namespace poisimex {

/// Regression coefficients: intercept, slope of the error-prone covariate,
/// slopes of the error-free covariates, and the residual variance.
struct CoefficientVector {
    double intercept = 0.0;
    double beta_x = 0.0;
    std::vector<double> beta_z;
    double residual_variance = 0.0;

    /// Number of regression coefficients (intercept + beta_x + beta_z).
    std::size_t coef_count() const { return 2 + beta_z.size(); }

    /// Coefficient by flat index: 0 intercept, 1 beta_x, 2+j beta_z[j].
    double coef(std::size_t idx) const {
        if (idx == 0) return intercept;
        if (idx == 1) return beta_x;
        return beta_z.at(idx - 2);
    }

    double& coef(std::size_t idx) {
        if (idx == 0) return intercept;
        if (idx == 1) return beta_x;
        return beta_z.at(idx - 2);
    }
};

/// First two moments of the true covariate distribution.
struct PopulationMoments {
    double mean_x = 1.0; // E[X] > 0
    double var_x = 0.0;  // Var[X] >= 0
};

/// Hidden generation record: the true covariate, the regression noise and
/// the coefficients used to build y. Estimators never receive this record.
struct GenerationTruth {
    std::vector<double> x;
    std::vector<double> eps;
    /// Present when the dataset came from the generator; residual_variance
    /// holds sigma_eps^2.
    std::optional<CoefficientVector> beta;
};

/// Evaluates intercept + beta_x*x + sum_j beta_z[j]*z[j] with a fixed
/// accumulation order, so generation and validation agree bitwise.
inline double linear_predictor(const CoefficientVector& beta, double x,
                               std::span<const double> z_row) {
    double v = beta.intercept + beta.beta_x * x;
    for (std::size_t j = 0; j < beta.beta_z.size(); ++j) {
        v += beta.beta_z[j] * z_row[j];
    }
    return v;
}

/// Observed tuples (y_i, w_i, a_i, z_i) plus the optional hidden truth.
struct Dataset {
    std::vector<double> y;        // responses
    std::vector<std::int64_t> w;  // non-negative surrogate counts
    std::vector<double> a;        // strictly positive areas
    Matrix z;                     // n rows, p >= 0 columns, error-free covariates
    std::optional<GenerationTruth> truth;

    std::size_t n() const { return y.size(); }
    std::size_t p() const { return z.cols; }

    std::span<const double> z_row(std::size_t i) const {
        return {z.data.data() + i * z.cols, z.cols};
    }

    /// Observed surrogate densities v_i = w_i / a_i.
    std::vector<double> densities() const {
        std::vector<double> v(y.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = static_cast<double>(w[i]) / a[i];
        }
        return v;
    }
};

namespace detail {

/// Observed columns only; the view SIMEX internals operate on. Keeping the
/// truth record out of this type means estimation code cannot read it.
struct ObservedView {
    std::span<const double> y;
    std::span<const std::int64_t> w;
    std::span<const double> a;
    const Matrix* z;

    std::size_t n() const { return y.size(); }
    std::size_t p() const { return z->cols; }
};

inline ObservedView observed(const Dataset& ds) {
    return ObservedView{ds.y, ds.w, ds.a, &ds.z};
}

} // namespace detail

/// Checks the Dataset invariants; throws on violation.
inline void validate_dataset(const Dataset& ds) {
    const std::size_t n = ds.y.size();
    if (n < 2) throw InvalidParameter("dataset needs at least 2 subjects");
    if (ds.w.size() != n || ds.a.size() != n || ds.z.rows != n) {
        throw DimensionMismatch("dataset columns have unequal lengths");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.w[i] < 0) throw InvalidParameter("surrogate count w must be >= 0");
        if (!(ds.a[i] > 0.0) || !std::isfinite(ds.a[i])) {
            throw InvalidParameter("area a must be strictly positive");
        }
        if (!std::isfinite(ds.y[i])) throw InvalidParameter("response y must be finite");
    }
    for (double v : ds.z.data) {
        if (!std::isfinite(v)) throw InvalidParameter("covariate z must be finite");
    }
    if (ds.truth) {
        const auto& t = *ds.truth;
        if (t.x.size() != n || t.eps.size() != n) {
            throw DimensionMismatch("truth columns have unequal lengths");
        }
        for (double x : t.x) {
            if (!(x > 0.0)) throw InvalidParameter("true density x must be strictly positive");
        }
        if (t.beta) {
            if (t.beta->beta_z.size() != ds.z.cols) {
                throw DimensionMismatch("truth beta_z length does not match z columns");
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double rebuilt = linear_predictor(*t.beta, t.x[i], ds.z_row(i)) + t.eps[i];
                if (rebuilt != ds.y[i]) {
                    throw InvalidParameter("y does not reconstruct from stored generation coefficients");
                }
            }
        }
    }
}

} // namespace poisimex
