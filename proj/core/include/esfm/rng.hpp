#pragma once

#include <cstdint>

namespace esfm {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based child seed: a pure function of (master, stream, index), so a
/// replication's draws never depend on which worker runs it.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
    return mix64(mix64(mix64(master) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

}  // namespace esfm
