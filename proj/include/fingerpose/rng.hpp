#pragma once

#include <cmath>
#include <cstdint>

namespace fingerpose {

// Deterministic generator used everywhere randomness is needed.  The standard
// <random> distributions are implementation-defined, which would break
// byte-identical reruns across standard libraries, so we keep our own:
// splitmix64 for bits, Marsaglia's polar method for normals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of mantissa.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [lo, hi).  Ranges here are tiny relative to 2^53, so the
    // scaling bias is irrelevant and the result stays reproducible.
    int uniform_int(int lo, int hi) {
        return lo + int(uniform() * double(hi - lo));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Stream derivation: mixes indices into the seed so that per-item
    // generators are independent of each other and of iteration order.
    static std::uint64_t mix(std::uint64_t x, std::uint64_t y) {
        x ^= y + 0x9E3779B97F4A7C15ull + (x << 6) + (x >> 2);
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        return Rng(mix(mix(seed, a + 1), b + 1));
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace fingerpose
