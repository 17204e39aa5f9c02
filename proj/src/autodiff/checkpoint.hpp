#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "autodiff/parameter.hpp"
#include "autodiff/tensor.hpp"

namespace readtwice::ad {

// Self-describing tensor container.
//
// Layout (all integers little-endian):
//   magic    8 bytes  "RTWCKPT\0"
//   version  u32      kCheckpointVersion
//   count    u32      number of tensors
//   count x { u32 path_len, path bytes, u8 dtype (1 = f64), u32 rank,
//             u64 dims[rank], f64 payload[prod(dims)] }
//   meta     u32      number of metadata pairs
//   meta x  { u32 key_len, key bytes, u32 value_len, value bytes }
//
// Doubles are stored as their IEEE-754 bit patterns, so a write/read cycle is
// bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every parameter into ckpt.tensors under `prefix + path`.
void store_params(const ParamStore& params, Checkpoint& ckpt, const std::string& prefix = "");
// Overwrites parameter values from ckpt; every parameter must be present with
// a matching shape unless allow_missing is set.
void load_params(ParamStore& params, const Checkpoint& ckpt, const std::string& prefix = "",
                 bool allow_missing = false);

}  // namespace readtwice::ad
