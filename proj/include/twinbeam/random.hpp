#pragma once

#include <cstdint>
#include <random>

namespace twinbeam {

using Rng = std::mt19937_64;

/// Independent, reproducible stream keyed by (seed, stream, substream).
/// std::seed_seq and mt19937_64 are fully specified, so the output does not
/// depend on the standard library in use.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(substream), hi(substream)};
  return Rng(seq);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace twinbeam
