#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dermforge/errors.hpp"

namespace dermforge {

// splitmix64 finalizer (Vigna). Used to derive child-stream seeds.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// PCG32 (XSH-RR, 64-bit state, 32-bit output), constants from the PCG
// reference implementation. Sequences are identical across platforms for a
// fixed (seed, stream), which is what the split/init/dropout/augmentation
// reproducibility tests rely on.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint64_t seed() const { return seed_; }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((0u - rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Unbiased integer in [0, bound) by rejection.
    uint32_t bounded(uint32_t bound) {
        if (bound == 0) throw ArgumentError("Rng::bounded: bound must be positive");
        uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Double in [0,1) with 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) {
        if (!(b >= a)) throw ArgumentError("Rng::uniform: requires b >= a");
        return a + (b - a) * next_double();
    }

    // Box-Muller; the spare draw is cached, so values come in deterministic pairs.
    double normal(double mu, double sigma) {
        if (sigma < 0.0) throw ArgumentError("Rng::normal: sigma must be >= 0");
        if (have_spare_) {
            have_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return mu + sigma * r * std::cos(t);
    }

    std::vector<double> draw_uniform(double a, double b, size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(a, b);
        return v;
    }

    std::vector<double> draw_normal(double mu, double sigma, size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(mu, sigma);
        return v;
    }

    // Independently seeded child generator keyed by (a, b). Children derived
    // from the parent's construction seed, not its current state, so the
    // mapping (seed, a, b) -> stream is stable no matter how much the parent
    // has been consumed.
    Rng child(uint64_t a, uint64_t b = 0) const {
        uint64_t h = splitmix64(seed_ ^ splitmix64(a));
        h = splitmix64(h ^ splitmix64(b));
        return Rng(h, splitmix64(h ^ stream_));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = bounded(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dermforge
