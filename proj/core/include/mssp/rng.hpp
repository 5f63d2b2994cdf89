#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mssp {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named random substream ("init",
/// "sampling", "shuffle", "speckle", ...) so each consumer of randomness can
/// be replayed in isolation from a single user-facing seed.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

inline Rng make_rng(std::uint64_t seed, std::string_view name) {
  return Rng(substream_seed(seed, name));
}

}  // namespace mssp
