#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace dig {

// Counter-style hash RNG. Gives pure, order-independent noise draws:
// the value at (seed, index) never depends on what else was sampled.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double hash_uniform(uint64_t seed, uint64_t index, uint64_t stream = 0) {
    uint64_t h = splitmix64(seed ^ splitmix64(index ^ splitmix64(stream)));
    // 53 high bits -> (0, 1], avoids log(0) in Box-Muller
    return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

inline double hash_normal(uint64_t seed, uint64_t index, uint64_t stream = 0) {
    double u1 = hash_uniform(seed, index, stream * 2 + 1);
    double u2 = hash_uniform(seed, index, stream * 2 + 2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

} // namespace dig
