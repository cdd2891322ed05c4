#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic randomness. Every random choice in the library flows from a
// single top-level seed through derive(): each module/iteration/member gets
// its own stream id, so runs are reproducible and independent work items can
// execute in any order (or in parallel) without changing results.
//
// Stream ids used across the library:
//   derive(seed, stream_id)                 one-level substream
//   derive(seed, (iter << 8) | purpose)     per-iteration substream in the loop
//
// Uniform draws go through the helpers below instead of std distributions so
// that byte-identical output does not depend on the standard library version.

namespace synex::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, stream_id).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
    return splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Uniform in [0, n). Unbiased via rejection on the top multiple of n.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller (no cached second value, for determinism).
inline double normal(Engine& eng) {
    double u1 = uniform_real(eng);
    double u2 = uniform_real(eng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace synex::rng
