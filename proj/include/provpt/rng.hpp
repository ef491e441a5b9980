#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace provpt {

// Deterministic RNG with fully specified transforms. std::mt19937_64 has a
// pinned algorithm, but the standard <random> distributions do not, so the
// uniform/normal transforms are spelled out here to keep frozen test values
// and run artifacts portable across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one draw per call, the pair's second half is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;  // avoid log(0)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Integer in [0, n).
    int64_t index(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Derive an independent stream for a named purpose. FNV-1a over the name,
    // mixed with the parent seed, so streams are stable across runs.
    Rng stream(const std::string& name, uint64_t salt = 0) const {
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= salt + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return Rng(seed_ ^ h);
    }

    uint64_t seed() const { return seed_; }

private:
    std::mt19937_64 eng_;
    uint64_t seed_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace provpt
