#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace xlsr {

// All randomness in the project flows from one user seed through named
// sub-streams (see derive_seed), so adding worker threads or reordering
// consumers never changes results.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stream seed = mix of base seed, stream name and two indices.
inline uint64_t derive_seed(uint64_t base, std::string_view stream,
                            uint64_t index = 0, uint64_t subindex = 0) {
    uint64_t h = splitmix64(base ^ fnv1a64(stream));
    h = splitmix64(h ^ (0x9e3779b97f4a7c15ull * (index + 1)));
    h = splitmix64(h ^ (0xc2b2ae3d27d4eb4full * (subindex + 1)));
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // unbiased [0, n) by rejection
    uint32_t uniform_int(uint32_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<uint32_t>(x % n);
    }

    // standard normal via Box-Muller; consumes exactly two draws per call
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 gen_;
};

}  // namespace xlsr
