#pragma once

#include <cstdint>
#include <random>

namespace jbsde {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream identifiers; each per-path random quantity draws from its own stream.
enum class Stream : std::uint64_t { brownian = 1, jumps = 2, audit = 3, sampling = 4 };

/// Engine keyed by (seed, index, stream). The result depends only on the key,
/// never on which worker asks for it.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t index, Stream stream) {
    const std::uint64_t key =
        mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL) ^
              mix64(static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace jbsde
