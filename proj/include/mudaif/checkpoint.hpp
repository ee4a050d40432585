// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mudaif/data.hpp"
#include "mudaif/model.hpp"

namespace mudaif {

// Binary layout, all integers little-endian:
//   "MUDAIFCK"  u32 version  u64 fnv1a64(config)  u64 len  config bytes
//   u64 tensor_count, then per tensor:
//   u32 name_len  name  u32 rank  u64 dims[rank]  f64 values[prod(dims)]
// The config is the canonical (sorted-key, compact) JSON of
// {"model": ModelConfig, "vocab": [tokens...]}.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  data::Vocabulary vocab;
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string canonical_config(const ModelConfig& config, const data::Vocabulary& vocab);

std::string encode_checkpoint(const Model& model, const data::Vocabulary& vocab);
/// Throws ParseError on a bad magic, version, hash or truncated payload.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const data::Vocabulary& vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mudaif
