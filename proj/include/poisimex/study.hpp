#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/format.hpp"
#include "poisimex/generate.hpp"
#include "poisimex/ols.hpp"
#include "poisimex/simex.hpp"

namespace poisimex {

enum class EstimatorKind : std::uint64_t {
    naive = 0,
    poi_simex_known = 1,
    poi_simex_estimated = 2,
};

inline std::string estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::naive: return "naive";
        case EstimatorKind::poi_simex_known: return "poi_simex_known";
        case EstimatorKind::poi_simex_estimated: return "poi_simex_estimated";
    }
    return "?";
}

inline EstimatorKind parse_estimator(const std::string& s) {
    if (s == "naive") return EstimatorKind::naive;
    if (s == "poi_simex_known") return EstimatorKind::poi_simex_known;
    if (s == "poi_simex_estimated") return EstimatorKind::poi_simex_estimated;
    throw UnknownEstimator("unknown estimator '" + s + "'");
}

struct StudyConfig {
    GenerationConfig generation; // n is overridden per cell
    std::vector<std::size_t> sample_sizes;
    std::size_t replicates = 1;
    SimexConfig simex;
    std::vector<EstimatorKind> estimators;
    std::uint64_t base_seed = 0;
    std::string output_dir;
};

struct StudyCell {
    std::size_t n = 0;
    std::size_t rep = 0;
    EstimatorKind estimator = EstimatorKind::naive;
    CoefficientVector estimate;
    bool ok = false;
    std::string status; // "ok" or a failure tag
};

struct BoxplotSummary {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    double mean = 0, sd = 0;
    std::size_t n = 0; // values summarized
};

struct StudySummaryRow {
    std::size_t n = 0;
    EstimatorKind estimator = EstimatorKind::naive;
    BoxplotSummary stats;     // over successful cells only
    std::size_t attempted = 0; // replicates attempted (the csv `count` column)
};

struct StudyResult {
    std::vector<std::size_t> sample_sizes;
    std::vector<EstimatorKind> estimators; // canonical (name) order
    std::size_t replicates = 0;
    std::size_t p = 0; // error-free covariate count
    double true_beta_x = 0.0;
    std::vector<StudyCell> cells; // ascending (n, rep, estimator name)
    std::vector<StudySummaryRow> summaries;
    bool degraded = false; // more than 5% of cells failed
};

/// Five-number summary plus mean/sd; quartiles use the type-7 convention
/// h = (n-1)p with linear interpolation between order statistics.
inline BoxplotSummary summarize(std::span<const double> values) {
    if (values.empty()) throw EmptyInput("summarize: empty value list");
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidParameter("summarize: values must be finite");
    }
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const auto quantile = [&](double p) {
        const double h = static_cast<double>(n - 1) * p;
        const std::size_t lo = static_cast<std::size_t>(h);
        if (lo + 1 >= n) return v[n - 1];
        return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
    };
    BoxplotSummary s;
    s.min = v.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = v.back();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    s.mean = mean;
    if (n > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        s.sd = std::sqrt(ss / static_cast<double>(n - 1));
    }
    s.n = n;
    return s;
}

namespace detail {

inline std::vector<EstimatorKind> canonical_estimators(std::vector<EstimatorKind> v) {
    std::sort(v.begin(), v.end(), [](EstimatorKind a, EstimatorKind b) {
        return estimator_name(a) < estimator_name(b);
    });
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) {
        throw InvalidParameter("duplicate estimator in study config");
    }
    return v;
}

inline std::string failure_tag(const std::exception& e) {
    if (dynamic_cast<const RankDeficient*>(&e)) return "rank_deficient";
    if (dynamic_cast<const PoleAtTarget*>(&e)) return "pole_at_target";
    if (dynamic_cast<const InsufficientGrid*>(&e)) return "insufficient_grid";
    if (dynamic_cast<const InvalidParameter*>(&e)) return "invalid_parameter";
    return "error";
}

inline CoefficientVector nan_coefficients(std::size_t p) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CoefficientVector c;
    c.intercept = nan;
    c.beta_x = nan;
    c.beta_z.assign(p, nan);
    c.residual_variance = nan;
    return c;
}

} // namespace detail

inline void validate_study_config(const StudyConfig& cfg) {
    if (cfg.sample_sizes.empty()) throw InvalidParameter("sample_sizes must be non-empty");
    for (std::size_t i = 0; i < cfg.sample_sizes.size(); ++i) {
        if (cfg.sample_sizes[i] < 2) throw InvalidParameter("sample sizes must be >= 2");
        if (i > 0 && cfg.sample_sizes[i] <= cfg.sample_sizes[i - 1]) {
            throw InvalidParameter("sample_sizes must be strictly increasing");
        }
    }
    if (cfg.replicates < 1) throw InvalidParameter("replicates must be >= 1");
    if (cfg.generation.area.size() != 1) {
        throw InvalidParameter("study generation requires a constant (scalar) area");
    }
    for (std::size_t n : cfg.sample_sizes) {
        GenerationConfig g = cfg.generation;
        g.n = n;
        validate_generation_config(g);
    }
    detail::canonical_estimators(cfg.estimators); // rejects duplicates
    bool any_simex = false;
    for (EstimatorKind k : cfg.estimators) {
        if (k != EstimatorKind::naive) any_simex = true;
        if (k == EstimatorKind::poi_simex_known &&
            cfg.simex.variance_mode.kind != VarianceMode::Kind::known) {
            throw InvalidParameter(
                "estimator poi_simex_known requires simex.variance_mode = known:<value>");
        }
    }
    if (any_simex) validate_simex_config(cfg.simex);
}

namespace detail {

/// Runs every estimator for one (size index, replicate) task; never throws.
/// The dataset comes from stream [si, ri]; estimator k reads stream
/// [si, ri, k] with k the estimator's fixed index (naive 0, known 1,
/// estimated 2), so each cell is recomputable in isolation.
inline void run_study_task(const StudyConfig& cfg, const std::vector<EstimatorKind>& order,
                           std::size_t si, std::size_t ri, StudyCell* out) {
    const std::size_t p = cfg.generation.beta.beta_z.size();
    for (std::size_t ei = 0; ei < order.size(); ++ei) {
        out[ei].n = cfg.sample_sizes[si];
        out[ei].rep = ri;
        out[ei].estimator = order[ei];
    }
    const RngStream cell_stream =
        RngStream(cfg.base_seed).child(si).child(ri);
    Dataset ds;
    try {
        GenerationConfig g = cfg.generation;
        g.n = cfg.sample_sizes[si];
        ds = generate_dataset(g, cell_stream);
    } catch (const std::exception& e) {
        for (std::size_t ei = 0; ei < order.size(); ++ei) {
            out[ei].estimate = nan_coefficients(p);
            out[ei].ok = false;
            out[ei].status = failure_tag(e);
        }
        return;
    }
    for (std::size_t ei = 0; ei < order.size(); ++ei) {
        const EstimatorKind kind = order[ei];
        try {
            if (kind == EstimatorKind::naive) {
                out[ei].estimate = naive_fit(ds);
            } else {
                SimexConfig sc = cfg.simex;
                if (kind == EstimatorKind::poi_simex_estimated) {
                    sc.variance_mode = VarianceMode::estimated();
                }
                const RngStream est_stream =
                    cell_stream.child(static_cast<std::uint64_t>(kind));
                out[ei].estimate = poi_simex(ds, sc, est_stream).coefficients;
            }
            out[ei].ok = true;
            out[ei].status = "ok";
        } catch (const std::exception& e) {
            out[ei].estimate = nan_coefficients(p);
            out[ei].ok = false;
            out[ei].status = failure_tag(e);
        }
    }
}

} // namespace detail

/// Runs the full replicated study. Cells are independent work units
/// scheduled across `threads` workers; results are identical for any
/// thread count because every cell reads only its own addressed streams
/// and writes only its own preallocated slot.
inline StudyResult run_study(const StudyConfig& cfg, std::size_t threads = 1) {
    validate_study_config(cfg);
    const std::vector<EstimatorKind> order = detail::canonical_estimators(cfg.estimators);

    StudyResult result;
    result.sample_sizes = cfg.sample_sizes;
    result.estimators = order;
    result.replicates = cfg.replicates;
    result.p = cfg.generation.beta.beta_z.size();
    result.true_beta_x = cfg.generation.beta.beta_x;

    const std::size_t tasks = cfg.sample_sizes.size() * cfg.replicates;
    const std::size_t per_task = order.size();
    result.cells.assign(tasks * per_task, StudyCell{});
    if (per_task > 0) {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t t = next.fetch_add(1);
                if (t >= tasks) return;
                const std::size_t si = t / cfg.replicates;
                const std::size_t ri = t % cfg.replicates;
                detail::run_study_task(cfg, order, si, ri, &result.cells[t * per_task]);
            }
        };
        const std::size_t nthreads = std::max<std::size_t>(1, std::min(threads, tasks));
        if (nthreads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(nthreads);
            for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
    }

    std::size_t failed = 0;
    std::vector<double> beta_x_values;
    beta_x_values.reserve(cfg.replicates);
    for (std::size_t si = 0; si < cfg.sample_sizes.size(); ++si) {
        for (std::size_t ei = 0; ei < per_task; ++ei) {
            beta_x_values.clear();
            for (std::size_t ri = 0; ri < cfg.replicates; ++ri) {
                const StudyCell& cell = result.cells[(si * cfg.replicates + ri) * per_task + ei];
                if (cell.ok) {
                    beta_x_values.push_back(cell.estimate.beta_x);
                } else {
                    ++failed;
                }
            }
            StudySummaryRow row;
            row.n = cfg.sample_sizes[si];
            row.estimator = order[ei];
            row.attempted = cfg.replicates;
            if (!beta_x_values.empty()) {
                row.stats = summarize(beta_x_values);
            } else {
                const double nan = std::numeric_limits<double>::quiet_NaN();
                row.stats = BoxplotSummary{nan, nan, nan, nan, nan, nan, nan, 0};
            }
            result.summaries.push_back(std::move(row));
        }
    }
    const std::size_t total = result.cells.size();
    result.degraded = total > 0 && failed * 20 > total; // > 5%
    return result;
}

inline void emit_cells_csv(const StudyResult& result, std::ostream& os) {
    os << "n,rep,estimator,beta_x,intercept";
    for (std::size_t j = 0; j < result.p; ++j) os << ",beta_z" << (j + 1);
    os << ",status\n";
    for (const StudyCell& cell : result.cells) {
        os << cell.n << ',' << cell.rep << ',' << estimator_name(cell.estimator) << ','
           << fmt_g17(cell.estimate.beta_x) << ',' << fmt_g17(cell.estimate.intercept);
        for (std::size_t j = 0; j < result.p; ++j) os << ',' << fmt_g17(cell.estimate.beta_z[j]);
        os << ',' << cell.status << '\n';
    }
}

inline void emit_summary_csv(const StudyResult& result, std::ostream& os) {
    os << "n,estimator,min,q1,median,q3,max,mean,sd,count\n";
    for (const StudySummaryRow& row : result.summaries) {
        os << row.n << ',' << estimator_name(row.estimator) << ',' << fmt_g17(row.stats.min)
           << ',' << fmt_g17(row.stats.q1) << ',' << fmt_g17(row.stats.median) << ','
           << fmt_g17(row.stats.q3) << ',' << fmt_g17(row.stats.max) << ','
           << fmt_g17(row.stats.mean) << ',' << fmt_g17(row.stats.sd) << ',' << row.attempted
           << '\n';
    }
}

/// Writes cells.csv and summary.csv into dir (which must already exist).
inline void emit_study_csv(const StudyResult& result, const std::string& dir) {
    for (const char* name : {"cells.csv", "summary.csv"}) {
        const std::string path = dir + "/" + name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot write '" + path + "'");
        if (std::string(name) == "cells.csv") {
            emit_cells_csv(result, os);
        } else {
            emit_summary_csv(result, os);
        }
        os.flush();
        if (!os) throw IoError("error writing '" + path + "'");
    }
}

} // namespace poisimex
