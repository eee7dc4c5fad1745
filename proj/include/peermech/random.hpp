#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace peermech {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of tags,
/// e.g. derive_seed(master, {replication, kStreamObservations}).
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t s = mix64(master);
    for (std::uint64_t tag : path)
        s = mix64(s ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return s;
}

/// Stream tags used by the experiment harness.
namespace stream {
inline constexpr std::uint64_t assignment = 1;
inline constexpr std::uint64_t world = 2;
inline constexpr std::uint64_t observations = 3;
inline constexpr std::uint64_t gibbs = 4;
inline constexpr std::uint64_t deviation = 5;
} // namespace stream

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

} // namespace peermech
