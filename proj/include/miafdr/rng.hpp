#pragma once

#include <cstdint>
#include <random>

namespace miafdr {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the `index`-th child of `master` within stream `stream`.
/// Distinct (stream, index) pairs give unrelated seeds, so per-model and
/// per-trial work can run in any order and still reproduce bit-exactly.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(master ^ mix_seed(stream)) + index);
}

// Stream tags.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kSubset = 4;
inline constexpr std::uint64_t kSurrogate = 5;
inline constexpr std::uint64_t kBinary = 6;
inline constexpr std::uint64_t kTrial = 7;
inline constexpr std::uint64_t kData = 8;
inline constexpr std::uint64_t kVictim = 9;
}  // namespace stream

}  // namespace miafdr
