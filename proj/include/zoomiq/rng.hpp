#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace zoomiq {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable way to derive independent streams from (seed, tag) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag + 0x9e3779b97f4a7c15ULL));
}

// Deterministic RNG wrapper. All sampling goes through hand-rolled
// transforms so a given seed produces the same stream on every build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi], inclusive. Fixed-point multiply keeps the
    // draw count at exactly one per call.
    int uniform_int(int lo, int hi) {
        const std::uint64_t range = std::uint64_t(hi - lo) + 1;
        const std::uint64_t r = std::uint64_t((__uint128_t(next_u64()) * range) >> 64);
        return lo + int(r);
    }

    // Standard normal via Box-Muller. Two draws per call, no cached spare.
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename V>
    void shuffle(V& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = std::size_t(uniform_int(0, int(i - 1)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Child stream keyed by tag; advances this stream by one draw.
    Rng fork(std::uint64_t tag) { return Rng(mix_seed(next_u64(), tag)); }

private:
    std::mt19937_64 gen_;
};

} // namespace zoomiq
