#pragma once

#include <cstdio>
#include <string>

namespace poisimex {

/// Full-precision decimal rendering (17 significant digits), locale-free.
/// Machine-facing files use this so values round-trip exactly.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Human-report rendering (6 significant digits).
inline std::string fmt_g6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace poisimex
