#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsest/mlp.hpp"

namespace sparsest {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  MaskedMlp model;
  std::optional<Params> momentum;
};

// Binary layout, little-endian:
//   "MLPCKPT1" | u32 version | u32 depth | u32 width | u64 seed
//   per layer: u32 rows, u32 cols, rows*cols f64 weights, rows f64 biases
//   per layer: weight mask bitmap, rows*cols bits row-major, MSB first,
//              padded to a whole byte
//   per layer: bias mask bitmap, rows bits, byte-padded
//   u8 has_momentum, then momentum arrays in the parameter layout
//   u32 provenance length, provenance bytes
std::vector<std::uint8_t> to_bytes(const Checkpoint& ck);
Checkpoint from_bytes(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// JSON debug dump; floats are decimal strings that parse back exactly.
std::string to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace sparsest
