// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mudaif/config.hpp"
#include "mudaif/fusion.hpp"
#include "mudaif/ops.hpp"
#include "mudaif/vta.hpp"

namespace mudaif {

// Reserved vocabulary entries.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;

enum class SequenceRole { Text, Prompt };

struct TokenSequence {
  std::vector<TokenId> ids;
  SequenceRole role = SequenceRole::Text;
};

struct DecoderLayerParams {
  Tensor attn_norm_gain, attn_norm_shift;
  Tensor w_query, w_key, w_value, w_out;  // d×d
  Tensor ffn_norm_gain, ffn_norm_shift;
  Tensor ffn_in, ffn_in_bias;    // d×(ffn_mult·d), ffn_mult·d
  Tensor ffn_out, ffn_out_bias;  // (ffn_mult·d)×d, d
};

struct DecoderParams {
  Tensor token_embedding;     // |Voc|×d
  Tensor position_embedding;  // max_seq_len×d
  std::vector<DecoderLayerParams> layers;
  Tensor final_norm_gain, final_norm_shift;
  Tensor head;       // d×|Voc|; undefined when embeddings are tied
  Tensor head_bias;  // |Voc|
};

/// All learnable state plus the configuration that shaped it.
struct Model {
  ModelConfig config;
  VtaParams vta;
  CoAttentionParams fusion;
  DecoderParams decoder;

  /// Deterministic initialization; `config.vocab_size` must be set.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  /// Stable, name-sorted-by-module parameter list used by the optimizer,
  /// checkpoints and the gradient checker.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Attention maps captured during a forward pass.
struct ForwardTrace {
  std::vector<Tensor> vta_attention;                 // per VTA head, N×N
  Tensor visual_to_text;                             // A_vt as used by the decoder
  Tensor text_to_visual;                             // A_tv, L×N
  std::vector<std::vector<Tensor>> decoder_attention;  // [layer][head], S×S
  std::size_t visual_rows = 0;
  std::size_t prompt_rows = 0;
  std::size_t text_rows = 0;
};

/// Next-token logits (L×|Voc|) at every text position.
///
/// The decoder sequence is [visual rows ; prompt rows ; text rows]. Visual rows
/// are V + A_vt·S, where S holds the prompt and begin-of-sequence embeddings;
/// text rows are T + A_tv·V. Visual and prompt rows see each other
/// bidirectionally and are visible to every text row; text rows are causal.
/// With StrictSum fusion (N == L) the visual rows are replaced by Z.
///
/// `text` must start with kBosId.
Tensor forward(const Model& model, const ImageTensor& image, std::span<const TokenId> text,
               std::span<const TokenId> prompt = {}, ForwardTrace* trace = nullptr);

/// Softmax of the last text position's logits.
std::vector<double> next_token_distribution(const Model& model, const ImageTensor& image,
                                            std::span<const TokenId> prefix,
                                            std::span<const TokenId> prompt = {});

enum class DecodeStrategy { Greedy, Temperature, TopK };

/// "greedy", "temperature" or "topk"; anything else is a ConfigError.
DecodeStrategy decode_strategy_from_string(const std::string& name);

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::Greedy;
  double temperature = 1.0;
  std::size_t top_k = 0;

  void validate() const;
};

/// Draws one token id from a logit row. Greedy ignores `rng`.
TokenId sample_token(std::span<const double> logits, const DecodeOptions& options,
                     std::mt19937_64& rng);

/// Autoregressive decoding from [bos]. Stops at kEosId (not returned) or after
/// `max_new` tokens. Sampled strategies are reproducible for a given seed.
std::vector<TokenId> generate(const Model& model, const ImageTensor& image,
                              std::span<const TokenId> prompt, const DecodeOptions& options,
                              std::size_t max_new, std::uint64_t seed);

}  // namespace mudaif
