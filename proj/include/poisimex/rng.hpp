#pragma once

#include <cstdint>

namespace poisimex {

namespace detail {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

} // namespace detail

/// Counter-based random stream. The n-th output is mix64(key + n*golden),
/// so a stream is fully determined by its key and never hands state to
/// derived streams. Sub-streams are addressed by hashing the parent key
/// with a path index: equal (seed, path) always reproduces the same
/// sequence, and distinct paths never share state.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed)
        : key_(detail::mix64(seed + detail::kGolden)) {}

    /// Derived sub-stream for path element `index`. Independent of any
    /// draws already taken from this stream.
    [[nodiscard]] RngStream child(std::uint64_t index) const {
        return RngStream(detail::mix64(key_ ^ detail::mix64(index + 0x632BE59BD9B4E019ULL)), RawKey{});
    }

    std::uint64_t next_u64() {
        counter_ += detail::kGolden;
        return detail::mix64(key_ + counter_);
    }

    /// Canonical uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1]; safe to pass through log().
    double next_double_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

private:
    struct RawKey {};
    RngStream(std::uint64_t key, RawKey) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace poisimex
