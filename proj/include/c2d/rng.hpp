#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace c2d {

// SplitMix64 finalizer, used to derive independent substream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG. std::mt19937_64 output is fixed by the standard; all
// distributions are implemented here (the std distributions are not
// bit-portable across library implementations).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Substream keyed on (seed, path...). Order-sensitive fold so
    // stream(s,{a,b}) != stream(s,{b,a}).
    static Rng stream(uint64_t seed, std::initializer_list<uint64_t> path) {
        uint64_t h = mix64(seed);
        for (uint64_t p : path) h = mix64(h ^ mix64(p));
        return Rng(h);
    }

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Avoid log(0).
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * M_PI * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace c2d
