#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace unic {

// Counter-based randomness. Every random decision in the project is a pure
// function of a key (run seed + a few stream ids), so draws are reproducible
// and independent of batch partitioning or worker count.

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x9AE16A3B2F90404Full;
    for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
    return h;
}

inline double u01(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline bool bernoulli(std::uint64_t h, double p) {
    return u01(h) < p;
}

// Uniform integer in [0, n) by fixed-point multiply; bias is < n / 2^64.
inline std::uint64_t uniform_index(std::uint64_t h, std::uint64_t n) {
    return static_cast<std::uint64_t>(u01(h) * static_cast<double>(n)) % n;
}

// Sequential stream for parameter initialization and shuffles.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return mix64(state_++); }
    double next_u01() { return u01(next_u64()); }

    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller; u clamped away from 0 so log stays finite.
        double u = next_u01();
        double v = next_u01();
        if (u < 1e-300) u = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Single normal draw from a key (for per-pixel noise and similar).
inline double normal_from_key(std::uint64_t h) {
    double u = u01(mix64(h ^ 0x5851F42D4C957F2Dull));
    double v = u01(mix64(h ^ 0x14057B7EF767814Full));
    if (u < 1e-300) u = 1e-300;
    return std::sqrt(-2.0 * std::log(u)) *
           std::cos(6.283185307179586476925286766559 * v);
}

}  // namespace unic
