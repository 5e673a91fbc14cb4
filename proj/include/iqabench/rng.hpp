#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace iqa {

// Deterministic RNG with platform-independent output. The standard
// distributions are implementation-defined, so uniform and normal draws
// are implemented directly on top of splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = -n % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; draws two uniforms per call, no caching.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used to derive per-trial RNG streams from string keys.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace iqa
