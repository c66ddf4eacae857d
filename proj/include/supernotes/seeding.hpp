#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace supernotes {

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Sub-seed derivation: every randomized stage takes a seed derived from the
// run seed plus a stable key, never the raw run seed itself.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key) {
    return splitmix64(base ^ splitmix64(key));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
    return derive_seed(base, fnv1a64(key));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace supernotes
