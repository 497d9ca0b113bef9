#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

#include "bilm/common.hpp"

namespace bilm {

// Counter-based RNG. Every random decision in the pipeline is a pure
// function of (key, counter), so batch prefetch order, thread scheduling
// and resume-from-checkpoint cannot change a single draw. Keys are derived
// by hashing labels/indices into a 128-bit state.
struct RngKey {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
};

namespace detail {
// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

inline RngKey rng_seed(std::uint64_t seed) {
    return {detail::mix64(seed), detail::mix64(detail::mix64(seed) ^ 0x1234567890abcdefull)};
}

inline RngKey rng_derive(RngKey k, std::uint64_t salt) {
    RngKey out;
    out.hi = detail::mix64(k.hi ^ detail::mix64(salt));
    out.lo = detail::mix64(k.lo ^ detail::mix64(salt ^ 0xa5a5a5a5a5a5a5a5ull));
    return out;
}

inline RngKey rng_derive(RngKey k, std::string_view label) {
    return rng_derive(k, fnv1a64(label));
}

inline std::uint64_t rng_bits(RngKey k, std::uint64_t counter) {
    return detail::mix64(detail::mix64(k.hi ^ counter) ^ k.lo);
}

// Uniform in [0, 1), 53-bit resolution.
inline double rng_uniform(RngKey k, std::uint64_t counter) {
    return static_cast<double>(rng_bits(k, counter) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes counters 2c and 2c+1.
inline double rng_normal(RngKey k, std::uint64_t counter) {
    double u1 = 1.0 - rng_uniform(k, 2 * counter);      // in (0, 1]
    double u2 = rng_uniform(k, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Unbiased uniform integer in [0, n) (Lemire reduction with rejection).
inline std::uint64_t rng_below(RngKey k, std::uint64_t counter, std::uint64_t n) {
    if (n <= 1) return 0;
    RngKey sub = rng_derive(k, counter);
    std::uint64_t attempt = 0;
    for (;;) {
        std::uint64_t x = rng_bits(sub, attempt++);
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo >= n || lo >= (0ull - n) % n) {
            return static_cast<std::uint64_t>(m >> 64);
        }
    }
}

// Deterministic Fisher-Yates shuffle of [0, n) indices under the given key.
template <typename Int>
void rng_shuffle(std::span<Int> items, RngKey k) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        std::uint64_t j = rng_below(k, i, i + 1);
        std::swap(items[i], items[j]);
    }
}

}  // namespace bilm
