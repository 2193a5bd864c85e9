#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wr {

// Deterministic random source. The engine sequence is pinned by the standard
// (mt19937_64), and all value transforms are written out here rather than
// taken from std distributions, whose outputs vary across standard libraries.
// Identical seeds therefore produce identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer uniform in [lo, hi] via rejection-free modulo on a 64-bit draw;
    // bias is negligible for the small ranges used here but we reject the top
    // sliver anyway to keep the stream exactly uniform.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return lo + static_cast<std::int64_t>(v % span);
    }

    // Standard normal via Box-Muller; one value per call, cached pair unused
    // to keep the draw count predictable.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Normal(0, sigma) clipped by redraw to +/-2 sigma.
    double trunc_normal(double sigma) {
        double v = normal();
        while (v < -2.0 || v > 2.0) v = normal();
        return v * sigma;
    }

private:
    std::mt19937_64 eng_;
};

// SplitMix64 step; used to derive independent child seeds from (seed, counters)
// so that sampling at iteration k never depends on consumption history.
inline std::uint64_t hash_mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return hash_mix(a ^ (hash_mix(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

}  // namespace wr
