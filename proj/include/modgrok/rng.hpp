#pragma once

#include <cmath>
#include <cstdint>

// Deterministic RNG used for every stochastic choice in the library
// (dataset splits, weight init, phase sampling). The generator is
// xoshiro256++ 1.0 (Blackman & Vigna), seeded through splitmix64, so
// streams are bit-reproducible across platforms and languages.
//
// Derived quantities are pinned to fixed recipes:
//   uniform double in [0,1):  (next() >> 11) * 2^-53
//   bounded integer:          threshold rejection, then x % n
//   standard normal:          Box-Muller, sqrt(-2 ln(1-u1)) * cos(2 pi u2),
//                             two uniforms consumed per sample, no caching

namespace modgrok {

class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        // splitmix64 expansion of the seed into the 256-bit state
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) return x % n;
        }
    }

    // standard normal via Box-Muller; 1-u1 keeps the log argument in (0,1]
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    std::uint64_t state_[4];
};

} // namespace modgrok
