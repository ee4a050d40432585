// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/config.hpp"

#include "mudaif/errors.hpp"
#include "mudaif/json_read.hpp"

namespace mudaif {

std::string to_string(FusionMode mode) {
  return mode == FusionMode::Concat ? "concat" : "strict_sum";
}

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "concat") return FusionMode::Concat;
  if (name == "strict_sum") return FusionMode::StrictSum;
  throw ConfigError("unknown fusion mode '" + name + "' (expected concat or strict_sum)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (d_model == 0) fail("d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (vta_heads == 0 || d_model % vta_heads != 0) fail("d_model must be divisible by vta_heads");
  if (n_layers == 0) fail("n_layers must be positive");
  if (ffn_mult == 0) fail("ffn_mult must be positive");
  if (patch_size == 0) fail("patch_size must be positive");
  if (max_patch_grid == 0) fail("max_patch_grid must be positive");
  if (max_seq_len < 2) fail("max_seq_len must be at least 2");
  if (vocab_size != 0 && vocab_size < 2) fail("vocab_size must be at least 2");
  if (!(init_std > 0.0)) fail("init_std must be positive");
  if (lambda_pretrain < 0.0 || lambda_task < 0.0) fail("loss weights must be non-negative");
}

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"d_model", c.d_model},
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"vocab_size", c.vocab_size},
      {"max_seq_len", c.max_seq_len},
      {"ffn_mult", c.ffn_mult},
      {"patch_size", c.patch_size},
      {"conv_channels", c.conv_channels},
      {"max_patch_grid", c.max_patch_grid},
      {"vta_heads", c.vta_heads},
      {"vta_residual", c.vta_residual},
      {"patch_positions", c.patch_positions},
      {"fusion", to_string(c.fusion)},
      {"tie_embeddings", c.tie_embeddings},
      {"zero_init_head", c.zero_init_head},
      {"init_std", c.init_std},
      {"lambda_pretrain", c.lambda_pretrain},
      {"lambda_task", c.lambda_task},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace json_read;
  require_object(j, path);
  reject_unknown(j, path,
                 {"d_model", "n_layers", "n_heads", "vocab_size", "max_seq_len", "ffn_mult",
                  "patch_size", "conv_channels", "max_patch_grid", "vta_heads", "vta_residual",
                  "patch_positions", "fusion", "tie_embeddings", "zero_init_head", "init_std",
                  "lambda_pretrain", "lambda_task"});
  ModelConfig c;
  auto count = [&](const char* key, std::size_t& out) {
    if (j.contains(key)) out = get_count(j.at(key), path + "." + key);
  };
  auto flag = [&](const char* key, bool& out) {
    if (j.contains(key)) out = get_bool(j.at(key), path + "." + key);
  };
  auto number = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_number(j.at(key), path + "." + key);
  };
  count("d_model", c.d_model);
  count("n_layers", c.n_layers);
  count("n_heads", c.n_heads);
  count("vocab_size", c.vocab_size);
  count("max_seq_len", c.max_seq_len);
  count("ffn_mult", c.ffn_mult);
  count("patch_size", c.patch_size);
  count("conv_channels", c.conv_channels);
  count("max_patch_grid", c.max_patch_grid);
  count("vta_heads", c.vta_heads);
  flag("vta_residual", c.vta_residual);
  flag("patch_positions", c.patch_positions);
  flag("tie_embeddings", c.tie_embeddings);
  flag("zero_init_head", c.zero_init_head);
  number("init_std", c.init_std);
  number("lambda_pretrain", c.lambda_pretrain);
  number("lambda_task", c.lambda_task);
  if (j.contains("fusion")) {
    const auto name = get_string(j.at("fusion"), path + ".fusion");
    try {
      c.fusion = fusion_mode_from_string(name);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ".fusion: " + e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

}  // namespace mudaif
