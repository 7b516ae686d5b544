#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace filet {

/// Uniform integer below bound via rejection sampling on raw 64-bit words,
/// so streams do not depend on the standard library's distribution choices.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % bound;
}

/// Splits one user seed into independent per-phase streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Fixed phase tags for stream derivation.
inline constexpr std::uint64_t kTagDataset = 1;
inline constexpr std::uint64_t kTagModel = 2;
inline constexpr std::uint64_t kTagPretrain = 3;
inline constexpr std::uint64_t kTagStats = 4;
inline constexpr std::uint64_t kTagTrain = 5;
inline constexpr std::uint64_t kTagProbe = 6;
inline constexpr std::uint64_t kTagSelect = 7;

}  // namespace filet
