#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ccdpo {

// All randomized operations in this project draw through these helpers so
// that output is reproducible across platforms. std::mt19937_64's output
// sequence is fixed by the standard; the distribution helpers below avoid
// std::uniform_*_distribution, whose mapping is implementation-defined.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-task seed derivation: seed_i = hash(master_seed, index).
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x51ed270b4d2c9f1bULL));
}

// Uniform draw in [0, n) by rejection sampling.
inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

// Uniform double in [0, 1) with 53 bits of precision.
inline double rand_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle_in_place(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = static_cast<std::size_t>(rand_below(rng, n - i));
        out.push_back(pool[j]);
        std::swap(pool[j], pool[n - 1 - i]);
    }
    return out;
}

}  // namespace ccdpo
