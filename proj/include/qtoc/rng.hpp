// rng.hpp — Deterministic, counter-keyed random streams.
//
// Every trajectory owns an independent stream keyed by (seed, index...), so
// results do not depend on how work is distributed over threads. Uniform and
// normal variates are generated with explicit bit manipulation rather than
// std::uniform_real_distribution, whose output is implementation-defined.

#pragma once

#include <cmath>
#include <cstdint>

namespace qtoc {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64.
class RngStream {
public:
    RngStream() : RngStream(0) {}

    explicit RngStream(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stream for a given (seed, key...) tuple. Mixing is order-sensitive, so
// (seed, a, b) and (seed, b, a) give unrelated streams.
inline RngStream keyed_stream(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                              std::uint64_t k3 = 0) {
    std::uint64_t x = seed;
    std::uint64_t h = splitmix64(x);
    x ^= k1 + 0x100000001b3ull;
    h ^= splitmix64(x);
    x ^= k2 + 0xcbf29ce484222325ull;
    h ^= splitmix64(x);
    x ^= k3 + 0x9ddfea08eb382d69ull;
    h ^= splitmix64(x);
    return RngStream(h);
}

}  // namespace qtoc
