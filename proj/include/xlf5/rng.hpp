#pragma once

#include <cmath>
#include <cstdint>

namespace xlf5 {

// Deterministic PRNG with a fixed algorithm (splitmix64 core). We do not use
// <random> distributions because their output is implementation-defined and
// seeded runs must reproduce bit-identically.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    float uniformf() { return float(next_u64() >> 40) * 0x1.0p-24f; }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // uniform in [lo, hi)
    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller with cached second draw
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    float normalf() { return float(normal()); }

    // Independent stream derived from this one; advancing the child does not
    // disturb the parent sequence.
    Rng fork(uint64_t label) {
        uint64_t s = next_u64();
        return Rng(s ^ (0x632be59bd9b4e019ULL * (label + 1)));
    }

private:
    uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace xlf5
