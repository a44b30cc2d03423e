#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "poisimex/errors.hpp"

namespace poisimex {

/// Dense row-major matrix. Used for the error-free covariate block and
/// for small normal-equation systems.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
};

namespace detail {

/// In-place LDL^T solve of a symmetric positive-definite system A x = b.
/// A is the full k-by-k matrix in row-major order; only the lower triangle
/// is read. Throws RankDeficient when a pivot is non-positive/non-finite
/// or when the smallest pivot falls below pivot_rtol times the largest.
inline void solve_spd_inplace(std::span<double> a, std::span<double> b,
                              std::size_t k, double pivot_rtol = 1e-12) {
    std::vector<double> d(k);
    // L overwrites the strict lower triangle of a.
    for (std::size_t j = 0; j < k; ++j) {
        double dj = a[j * k + j];
        for (std::size_t s = 0; s < j; ++s) {
            const double l = a[j * k + s];
            dj -= l * l * d[s];
        }
        if (!(dj > 0.0) || !std::isfinite(dj)) {
            throw RankDeficient("normal equations are singular (non-positive pivot)");
        }
        d[j] = dj;
        for (std::size_t i = j + 1; i < k; ++i) {
            double v = a[i * k + j];
            for (std::size_t s = 0; s < j; ++s) {
                v -= a[i * k + s] * a[j * k + s] * d[s];
            }
            a[i * k + j] = v / dj;
        }
    }
    double dmin = d[0];
    double dmax = d[0];
    for (std::size_t j = 1; j < k; ++j) {
        dmin = std::min(dmin, d[j]);
        dmax = std::max(dmax, d[j]);
    }
    if (dmin < pivot_rtol * dmax) {
        throw RankDeficient("normal equations are rank deficient (pivot ratio below threshold)");
    }
    // Forward substitution L z = b.
    for (std::size_t i = 0; i < k; ++i) {
        double v = b[i];
        for (std::size_t s = 0; s < i; ++s) v -= a[i * k + s] * b[s];
        b[i] = v;
    }
    // Diagonal.
    for (std::size_t i = 0; i < k; ++i) b[i] /= d[i];
    // Back substitution L^T x = z.
    for (std::size_t i = k; i-- > 0;) {
        double v = b[i];
        for (std::size_t s = i + 1; s < k; ++s) v -= a[s * k + i] * b[s];
        b[i] = v;
    }
}

} // namespace detail

/// Solves A x = b for symmetric positive-definite A (row-major, k*k).
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b,
                                     std::size_t k, double pivot_rtol = 1e-12) {
    if (a.size() != k * k || b.size() != k) {
        throw DimensionMismatch("solve_spd: matrix/vector sizes do not match k");
    }
    detail::solve_spd_inplace(a, b, k, pivot_rtol);
    return b;
}

} // namespace poisimex
