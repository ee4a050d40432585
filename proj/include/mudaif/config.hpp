// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

namespace mudaif {

enum class FusionMode {
  Concat,     // [A_vt·T ; A_tv·V], any N and L
  StrictSum,  // A_vt·T + A_tv·V, requires N == L
};

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

/// Hyperparameters shaping every learnable tensor of the model.
struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t vocab_size = 0;  // 0: taken from the vocabulary at build time
  std::size_t max_seq_len = 64;
  std::size_t ffn_mult = 4;

  std::size_t patch_size = 8;
  std::size_t conv_channels = 0;  // 0: same as d_model
  std::size_t max_patch_grid = 16;
  std::size_t vta_heads = 1;
  bool vta_residual = false;
  bool patch_positions = true;

  FusionMode fusion = FusionMode::Concat;
  bool tie_embeddings = false;
  bool zero_init_head = true;
  double init_std = 0.1;

  double lambda_pretrain = 1.0;
  double lambda_task = 1.0;

  std::size_t conv_width() const { return conv_channels ? conv_channels : d_model; }

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Canonical (sorted-key) JSON encoding.
nlohmann::json to_json(const ModelConfig& config);

/// Strict decoding: unknown keys and wrong types raise ConfigError whose
/// message starts with the JSON path of the offending value.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "$");

}  // namespace mudaif
