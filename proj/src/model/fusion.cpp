// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/fusion.hpp"

#include <cmath>

#include "mudaif/errors.hpp"
#include "mudaif/init.hpp"
#include "mudaif/ops.hpp"

namespace mudaif {

namespace {

void check_streams(const Tensor& visual, const Tensor& text, const CoAttentionParams& params) {
  if (visual.rank() != 2 || text.rank() != 2 || visual.cols() != text.cols()) {
    throw ShapeError("co-attention: visual " + shape_str(visual.shape()) + " and text " +
                     shape_str(text.shape()) + " must share width d");
  }
  if (params.w_query_visual.rows() != visual.cols()) {
    throw ShapeError("co-attention: projections " + shape_str(params.w_query_visual.shape()) +
                     " vs stream width " + std::to_string(visual.cols()));
  }
}

Tensor cross_weights(const Tensor& queries, const Tensor& keys, const Tensor& wq,
                     const Tensor& wk) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  Tensor logits = matmul(matmul(queries, wq), transpose(matmul(keys, wk)));
  return softmax_rows(scale(logits, inv_sqrt_d));
}

}  // namespace

CoAttentionParams CoAttentionParams::init(const ModelConfig& config, std::mt19937_64& rng) {
  const std::size_t d = config.d_model;
  const double s = init::fan_in_std(d);
  return {init::normal({d, d}, s, rng), init::normal({d, d}, s, rng),
          init::normal({d, d}, s, rng), init::normal({d, d}, s, rng)};
}

std::vector<std::pair<std::string, Tensor>> CoAttentionParams::named() const {
  return {{"fusion.w_query_visual", w_query_visual},
          {"fusion.w_key_visual", w_key_visual},
          {"fusion.w_query_text", w_query_text},
          {"fusion.w_key_text", w_key_text}};
}

Tensor visual_to_text_weights(const Tensor& visual, const Tensor& text,
                              const CoAttentionParams& params) {
  check_streams(visual, text, params);
  return cross_weights(visual, text, params.w_query_visual, params.w_key_text);
}

Tensor text_to_visual_weights(const Tensor& visual, const Tensor& text,
                              const CoAttentionParams& params) {
  check_streams(visual, text, params);
  return cross_weights(text, visual, params.w_query_text, params.w_key_visual);
}

CoAttention co_attention_weights(const Tensor& visual, const Tensor& text,
                                 const CoAttentionParams& params) {
  return {visual_to_text_weights(visual, text, params),
          text_to_visual_weights(visual, text, params)};
}

FusedRepresentation fuse(const Tensor& a_vt, const Tensor& a_tv, const Tensor& text,
                         const Tensor& visual, FusionMode mode) {
  if (a_vt.rank() != 2 || a_tv.rank() != 2 || a_vt.cols() != text.rows() ||
      a_tv.cols() != visual.rows() || text.cols() != visual.cols()) {
    throw ShapeError("fuse: A_vt " + shape_str(a_vt.shape()) + ", A_tv " +
                     shape_str(a_tv.shape()) + ", T " + shape_str(text.shape()) + ", V " +
                     shape_str(visual.shape()) + " are inconsistent");
  }
  const std::size_t n = a_vt.rows(), l = a_tv.rows();
  Tensor visual_block = matmul(a_vt, text);    // N×d
  Tensor text_block = matmul(a_tv, visual);    // L×d
  FusedRepresentation z;
  z.mode = mode;
  if (mode == FusionMode::StrictSum) {
    if (n != l) {
      throw ModeError("strict-sum fusion needs N == L: A_vt·T is " + std::to_string(n) +
                      "xd but A_tv·V is " + std::to_string(l) +
                      "xd; use concat mode for unequal stream lengths");
    }
    z.matrix = add(visual_block, text_block);
    return z;
  }
  const Tensor blocks[] = {visual_block, text_block};
  z.matrix = concat_rows(blocks);
  z.provenance.assign(n, Stream::Visual);
  z.provenance.insert(z.provenance.end(), l, Stream::Text);
  return z;
}

}  // namespace mudaif
