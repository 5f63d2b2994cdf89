#pragma once

#include <cstdint>
#include <filesystem>

#include "mssp/model.hpp"

namespace mssp {

// Binary checkpoint, little-endian:
//   "MSSPNET1" | u32 version | u32 tensor count |
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank × u32 dims,
//               float32 payload in row-major order.
inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'S', 'P', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path,
                     const ModelConfig& config = {});

/// Loads and validates a checkpoint against the roster of `config`. Throws
/// CheckpointMagicError, CheckpointVersionError, CheckpointTruncationError or
/// CheckpointRosterError (which names the offending tensor).
ModelParams<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig& config = {});

}  // namespace mssp
