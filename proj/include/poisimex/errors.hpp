#pragma once

#include <stdexcept>
#include <string>

namespace poisimex {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidParameter : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct InsufficientGrid : Error { using Error::Error; };
struct PoleAtTarget : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct UnknownEstimator : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace poisimex
