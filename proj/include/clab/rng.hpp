#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace clab {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a list of tags into a master seed: s <- splitmix64(s ^ splitmix64(tag)).
/// Every stochastic stage draws from mix_seed(master, {stage, n, repetition}).
inline std::uint64_t mix_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t s = splitmix64(master);
    for (auto t : tags) s = splitmix64(s ^ splitmix64(t));
    return s;
}

using Rng = std::mt19937_64;

// Stage tags for mix_seed.
enum class SeedStage : std::uint64_t {
    Sample = 1,
    AuxPoints = 2,
    Dictionary = 3,
    Signals = 4,
    Teacher = 5,
    Heldout = 6,
    Checks = 7,
};

inline std::uint64_t stage_seed(std::uint64_t master, SeedStage stage, std::uint64_t n, std::uint64_t rep) noexcept {
    return mix_seed(master, {static_cast<std::uint64_t>(stage), n, rep});
}

}  // namespace clab
