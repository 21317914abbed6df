// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace platoon {

using Rng = std::mt19937_64;

// Independent generator streams derived from one run seed.
enum class Stream : std::uint64_t {
  kEnvironment = 1,
  kExploration = 2,
  kReplay = 3,
  kInit = 4,
  kEvaluation = 5,
  kRandomPolicy = 6,
};

/// Generator for (seed, stream, index). Same triple, same sequence.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace platoon
