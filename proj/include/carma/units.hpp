#pragma once

#include <cmath>
#include <cstdint>

namespace carma {

using Bytes = std::uint64_t;
using SimSeconds = double;

inline constexpr Bytes kKiB = 1024ull;
inline constexpr Bytes kMiB = 1024ull * kKiB;
inline constexpr Bytes kGiB = 1024ull * kMiB;

inline constexpr Bytes gib(double v) {
    return static_cast<Bytes>(v * static_cast<double>(kGiB) + 0.5);
}

inline constexpr Bytes mib(double v) {
    return static_cast<Bytes>(v * static_cast<double>(kMiB) + 0.5);
}

inline double as_gib(Bytes b) {
    return static_cast<double>(b) / static_cast<double>(kGiB);
}

}  // namespace carma
