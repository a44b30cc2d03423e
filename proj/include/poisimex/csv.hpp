#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/format.hpp"
#include "poisimex/types.hpp"

namespace poisimex {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream iss(line);
    while (std::getline(iss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError("malformed numeric field '" + s + "' in " + ctx);
    }
}

} // namespace detail

/// Dataset CSV header: y,w,a,z1,...,zp with optional trailing x,eps truth
/// columns. One row per subject, LF line endings, 17 significant digits.
inline std::string dataset_to_csv(const Dataset& ds, bool keep_truth) {
    if (keep_truth && !ds.truth) {
        throw InvalidParameter("dataset has no truth record to keep");
    }
    std::string out = "y,w,a";
    for (std::size_t j = 0; j < ds.p(); ++j) {
        out += ",z" + std::to_string(j + 1);
    }
    if (keep_truth) out += ",x,eps";
    out += '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out += fmt_g17(ds.y[i]);
        out += ',' + std::to_string(ds.w[i]);
        out += ',' + fmt_g17(ds.a[i]);
        for (std::size_t j = 0; j < ds.p(); ++j) {
            out += ',' + fmt_g17(ds.z(i, j));
        }
        if (keep_truth) {
            out += ',' + fmt_g17(ds.truth->x[i]);
            out += ',' + fmt_g17(ds.truth->eps[i]);
        }
        out += '\n';
    }
    return out;
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path, bool keep_truth) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << dataset_to_csv(ds, keep_truth);
    if (!f) throw IoError("write to '" + path + "' failed");
}

inline Dataset parse_dataset_csv(std::istream& in, const std::string& ctx) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty dataset file " + ctx);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "y" || header[1] != "w" || header[2] != "a") {
        throw IoError("bad dataset header in " + ctx + " (expected y,w,a,z1,...)");
    }
    bool has_truth = false;
    std::size_t p = 0;
    for (std::size_t c = 3; c < header.size(); ++c) {
        if (header[c] == "x") {
            if (c + 2 != header.size() || header[c + 1] != "eps") {
                throw IoError("bad truth columns in " + ctx + " (expected trailing x,eps)");
            }
            has_truth = true;
            break;
        }
        if (header[c] != "z" + std::to_string(p + 1)) {
            throw IoError("unexpected column '" + header[c] + "' in " + ctx);
        }
        ++p;
    }
    const std::size_t ncols = 3 + p + (has_truth ? 2 : 0);

    Dataset ds;
    GenerationTruth truth;
    std::vector<double> zdata;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto fields = detail::split_csv_line(line);
        const std::string where = ctx + " row " + std::to_string(row);
        if (fields.size() != ncols) {
            throw IoError("wrong field count in " + where);
        }
        ds.y.push_back(detail::parse_double(fields[0], where));
        const double wv = detail::parse_double(fields[1], where);
        if (wv < 0.0 || wv != std::floor(wv)) {
            throw IoError("count w must be a non-negative integer in " + where);
        }
        ds.w.push_back(static_cast<std::int64_t>(wv));
        ds.a.push_back(detail::parse_double(fields[2], where));
        for (std::size_t j = 0; j < p; ++j) {
            zdata.push_back(detail::parse_double(fields[3 + j], where));
        }
        if (has_truth) {
            truth.x.push_back(detail::parse_double(fields[3 + p], where));
            truth.eps.push_back(detail::parse_double(fields[4 + p], where));
        }
    }
    ds.z.rows = ds.y.size();
    ds.z.cols = p;
    ds.z.data = std::move(zdata);
    if (has_truth) ds.truth = std::move(truth);
    validate_dataset(ds);
    return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset file '" + path + "'");
    return parse_dataset_csv(f, "'" + path + "'");
}

} // namespace poisimex
