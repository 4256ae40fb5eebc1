#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ctrkit {

// Deterministic RNG with named sub-streams. One master seed fans out to
// independent streams ("init:tower.w0", "shuffle" + epoch, "downsample", ...)
// so changing one consumer never shifts the draws seen by another.
// Distributions are hand-rolled on top of the raw 64-bit stream; bit
// reproducibility does not depend on the standard library's <random>
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // burn-in so small seeds do not start in a low-entropy region
        next_u64();
        next_u64();
    }

    static uint64_t stream_seed(uint64_t master, std::string_view stream, uint64_t index = 0);

    static Rng from(uint64_t master, std::string_view stream, uint64_t index = 0) {
        return Rng(stream_seed(master, stream, index));
    }

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1
    uint64_t uniform_int(uint64_t n) {
        // rejection sampling keeps the draw exactly uniform
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller; always consumes exactly two draws
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t Rng::stream_seed(uint64_t master, std::string_view stream, uint64_t index) {
    uint64_t h = fnv1a64(stream);
    // one splitmix round to decorrelate (master, stream, index) triples
    uint64_t z = master ^ (h + 0x9e3779b97f4a7c15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace ctrkit
