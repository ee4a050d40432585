// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/training.hpp"

namespace mudaif {

// Counts are multiply-accumulates of the matrix products only; normalization,
// activations and softmax are lower order and left out of both sides alike.

std::size_t attention_layer_flops(std::size_t s, std::size_t d) {
  return 2 * s * s * d + 4 * s * d * d;
}

namespace {

std::size_t block_params(std::size_t d, std::size_t hidden) {
  return 4 * d * d         // query, key, value, output
         + 4 * d           // two layer norms
         + 2 * d * hidden  // feed-forward matrices
         + hidden + d;     // feed-forward biases
}

std::size_t block_flops(std::size_t s, std::size_t d, std::size_t hidden) {
  return attention_layer_flops(s, d) + 2 * s * d * hidden;
}

// Parameters and cost shared by both variants: the decoder and its head.
void add_decoder(CostBreakdown& c, const ModelConfig& cfg, std::size_t s, std::size_t text_len) {
  const std::size_t d = cfg.d_model, v = cfg.vocab_size, hidden = cfg.ffn_mult * d;
  c.params += v * d + cfg.max_seq_len * d + cfg.n_layers * block_params(d, hidden) + 2 * d + v;
  if (!cfg.tie_embeddings) c.params += d * v;
  c.decoder_flops += cfg.n_layers * block_flops(s, d, hidden) + text_len * d * v;
}

}  // namespace

CostComparison count_params_flops(const ModelConfig& cfg, std::size_t height, std::size_t width,
                                  std::size_t text_len, std::size_t prompt_len) {
  cfg.validate();
  const std::size_t p = cfg.patch_size, d = cfg.d_model, conv = cfg.conv_width();
  const std::size_t n = ((height + p - 1) / p) * ((width + p - 1) / p);
  const std::size_t s = n + prompt_len + text_len;
  const std::size_t hidden = cfg.ffn_mult * d;
  CostComparison out;

  auto& a = out.encoder_free;
  a.visual_tokens = n;
  a.params += p * p * 3 * conv + conv + conv * d + d;
  if (cfg.patch_positions) a.params += 2 * cfg.max_patch_grid * d;
  a.params += 3 * d * d;  // adapter query, key, value
  a.params += 4 * d * d;  // co-attention projections
  a.patch_flops = n * p * p * 3 * conv + n * conv * d;
  a.vision_flops = 3 * n * d * d + 2 * n * n * d;
  const std::size_t context = cfg.fusion == FusionMode::StrictSum ? text_len : prompt_len + 1;
  // Visual queries and keys, context keys, text queries; then both score and
  // value products.
  a.fusion_flops = 2 * n * d * d + context * d * d + text_len * d * d + 2 * n * context * d +
                   2 * text_len * n * d;
  add_decoder(a, cfg, s, text_len);
  a.flops = a.patch_flops + a.vision_flops + a.fusion_flops + a.decoder_flops;

  auto& b = out.encoder_based;
  b.visual_tokens = n;
  b.params += p * p * 3 * d + d;                              // patch embedding
  b.params += cfg.max_patch_grid * cfg.max_patch_grid * d;    // encoder positions
  b.params += cfg.n_layers * block_params(d, hidden) + 2 * d;  // blocks and final norm
  b.params += d * d + d;                                      // connector into the decoder
  b.patch_flops = n * p * p * 3 * d;
  b.vision_flops = cfg.n_layers * block_flops(n, d, hidden);
  b.fusion_flops = n * d * d;
  add_decoder(b, cfg, s, text_len);
  b.flops = b.patch_flops + b.vision_flops + b.fusion_flops + b.decoder_flops;
  return out;
}

}  // namespace mudaif
