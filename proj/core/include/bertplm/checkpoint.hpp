#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bertplm/config.hpp"
#include "bertplm/encoder.hpp"
#include "bertplm/optim.hpp"

// Checkpoint file (.ckpt), all integers little-endian:
//
//   magic "CKP1"
//   u32 entry count
//   per entry: u16 name length, name, u8 rank, rank * u32 dims, f32 payload
//   u32 length, UTF-8 config text
//
// The config text is the resolved `key = value` listing followed by
// `checkpoint.*` metadata lines (training step). Optimizer moments are stored
// as entries named adam.m/<param> and adam.v/<param>, plus a scalar adam.step.
namespace bertplm::train {

inline constexpr char kCheckpointMagic[4] = {'C', 'K', 'P', '1'};

struct Checkpoint {
  model::ParamSet arrays;  // encoder (+ head) arrays, then optimizer moments
  config::Config config;
  std::uint64_t step = 0;

  /// Rebuilds the encoder from the stored arrays; the vocabulary size is read
  /// off the embedding table.
  model::EncoderParams encoder() const;
  /// Optimizer state if moments were stored.
  std::optional<OptimState> optim(const model::EncoderParams& params) const;
};

Checkpoint make_checkpoint(const model::EncoderParams& params, const OptimState* optim, const config::Config& config,
                           std::uint64_t step);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// FormatError with byte offset on malformed input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling file, then renames over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bertplm::train
