// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "platoon/nn.hpp"

namespace platoon {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk layout (all integers and floats little-endian):
///   8 bytes  magic "PLTNQNET"
///   u32      format version (1)
///   u64      scenario hash
///   u32 x 4  input_dim, hidden, n_actions, n_nets
///   u32      metadata length, then that many bytes of UTF-8 JSON
///   f64 ...  per net, every tensor in QNetParams::for_each order, column-major
struct Checkpoint {
  std::string algo;
  std::uint64_t scenario_hash = 0;
  std::string metadata_json = "{}";
  std::vector<QNetParams> nets;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes of a checkpoint; what save_checkpoint writes.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace platoon
