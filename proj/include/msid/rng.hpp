#pragma once

#include <cmath>
#include <cstdint>

namespace msid {

// Deterministic 64-bit generator used everywhere randomness is needed
// (weight init, measurement noise, batch shuffling). xoshiro256** seeded
// through splitmix64; normals via Box-Muller. Independent streams are derived
// from (seed, purpose, index) so parallel trajectory generation stays
// reproducible under any thread count.
class Rng {
public:
    Rng() : Rng(0x9e3779b97f4a7c15ull) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Sub-stream for a (purpose, index) pair, e.g. one stream per trajectory.
    static Rng stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
        std::uint64_t x = seed;
        std::uint64_t a = splitmix64(x);
        x ^= purpose * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull;
        std::uint64_t b = splitmix64(x);
        x ^= index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
        std::uint64_t c = splitmix64(x);
        return Rng(a ^ (b * 3) ^ (c * 7));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. Draws two uniforms per call; the sine
    // branch is discarded, which keeps the call sequence trivially replayable.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace msid
