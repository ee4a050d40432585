// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mudaif/config.hpp"
#include "mudaif/tensor.hpp"

namespace mudaif {

struct CoAttentionParams {
  Tensor w_query_visual;  // d×d
  Tensor w_key_visual;    // d×d
  Tensor w_query_text;    // d×d
  Tensor w_key_text;      // d×d

  static CoAttentionParams init(const ModelConfig& config, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

struct CoAttention {
  Tensor visual_to_text;  // A_vt, N×L
  Tensor text_to_visual;  // A_tv, L×N
};

/// A_vt = softmax_rows(Q_v K_tᵀ / sqrt(d)), visual queries over text keys.
Tensor visual_to_text_weights(const Tensor& visual, const Tensor& text,
                              const CoAttentionParams& params);
/// A_tv = softmax_rows(Q_t K_vᵀ / sqrt(d)), text queries over visual keys.
Tensor text_to_visual_weights(const Tensor& visual, const Tensor& text,
                              const CoAttentionParams& params);

CoAttention co_attention_weights(const Tensor& visual, const Tensor& text,
                                 const CoAttentionParams& params);

enum class Stream { Visual, Text };

struct FusedRepresentation {
  FusionMode mode = FusionMode::Concat;
  Tensor matrix;
  /// Concat mode: the query stream of each row (visual rows first). Strict-sum
  /// rows mix both streams and carry no provenance.
  std::vector<Stream> provenance;
};

/// Combines the cross-attended streams. Raw `text` and `visual` act as values.
///   Concat:    rows [A_vt·T ; A_tv·V]
///   StrictSum: A_vt·T + A_tv·V, defined only when N == L
FusedRepresentation fuse(const Tensor& a_vt, const Tensor& a_tv, const Tensor& text,
                         const Tensor& visual, FusionMode mode);

}  // namespace mudaif
