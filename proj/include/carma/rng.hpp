#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace carma {

// Seeded RNG with hand-rolled samplers. std:: distributions are
// implementation-defined; these produce the same streams everywhere, which
// keeps generated traces and datasets byte-stable across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Multiply-shift; bias is < 2^-64 per draw.
    std::uint64_t uniform(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        uniform(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double uniform_real(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Exponential with the given mean (inter-arrival gaps).
    double exponential(double mean) {
        double u = next_double();
        return -mean * std::log1p(-u);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace carma
