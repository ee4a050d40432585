// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/vta.hpp"

#include <algorithm>
#include <cmath>

#include "mudaif/errors.hpp"
#include "mudaif/init.hpp"
#include "mudaif/ops.hpp"

namespace mudaif {

ImageTensor::ImageTensor(Tensor pixels, ShapeOnly) : pixels_(std::move(pixels)) {
  const auto& s = pixels_.shape();
  if (s.size() != 3 || s[2] != 3 || s[0] == 0 || s[1] == 0) {
    throw ShapeError("image must be HxWx3 with H, W >= 1, got " + shape_str(s));
  }
}

ImageTensor::ImageTensor(Tensor pixels) : ImageTensor(std::move(pixels), ShapeOnly{}) {
  for (double v : pixels_.data()) {
    if (v < 0.0 || v > 1.0) throw ShapeError("image values must lie in [0, 1]");
  }
}

ImageTensor ImageTensor::from_pixels(std::size_t height, std::size_t width,
                                     std::vector<double> rgb) {
  return ImageTensor(Tensor::from({height, width, 3}, std::move(rgb)));
}

VtaParams VtaParams::init(const ModelConfig& config, std::mt19937_64& rng) {
  const std::size_t p = config.patch_size, c = config.conv_width(), d = config.d_model;
  VtaParams v;
  v.kernel = init::normal({p, p, 3, c}, init::fan_in_std(p * p * 3), rng);
  v.conv_bias = Tensor::zeros({c}, true);
  v.proj = init::normal({c, d}, init::fan_in_std(c), rng);
  v.proj_bias = Tensor::zeros({d}, true);
  v.w_query = init::normal({d, d}, init::fan_in_std(d), rng);
  v.w_key = init::normal({d, d}, init::fan_in_std(d), rng);
  v.w_value = init::normal({d, d}, init::fan_in_std(d), rng);
  if (config.patch_positions) {
    v.row_pos = init::normal({config.max_patch_grid, d}, config.init_std, rng);
    v.col_pos = init::normal({config.max_patch_grid, d}, config.init_std, rng);
  }
  return v;
}

std::vector<std::pair<std::string, Tensor>> VtaParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"vta.kernel", kernel},       {"vta.conv_bias", conv_bias}, {"vta.proj", proj},
      {"vta.proj_bias", proj_bias}, {"vta.w_query", w_query},     {"vta.w_key", w_key},
      {"vta.w_value", w_value}};
  if (row_pos.defined()) {
    out.emplace_back("vta.row_pos", row_pos);
    out.emplace_back("vta.col_pos", col_pos);
  }
  return out;
}

ImageTensor pad_to_patch_grid(const ImageTensor& image, std::size_t patch) {
  if (patch == 0) throw ShapeError("patch size must be at least 1");
  const std::size_t h = image.height(), w = image.width();
  const std::size_t ph = (h + patch - 1) / patch * patch;
  const std::size_t pw = (w + patch - 1) / patch * patch;
  if (ph == h && pw == w) return image;
  const auto src = image.tensor().data();
  std::vector<double> out(ph * pw * 3, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(src.begin() + y * w * 3, w * 3, out.begin() + y * pw * 3);
  Tensor padded = make_op("pad", {ph, pw, 3}, std::move(out), {image.tensor()},
                          [h, w, pw](detail::Node& self) {
                            auto g = self.parents[0]->grad_buffer();
                            for (std::size_t y = 0; y < h; ++y)
                              for (std::size_t i = 0; i < w * 3; ++i)
                                g[y * w * 3 + i] += self.grad[y * pw * 3 + i];
                          });
  return ImageTensor(std::move(padded), ImageTensor::ShapeOnly{});
}

PseudoTokens vta_embed(const ImageTensor& image, const VtaParams& params,
                       const ModelConfig& config) {
  if (params.proj.rank() != 2 || params.proj.cols() != config.d_model) {
    throw ConfigError("VTA projection width " + shape_str(params.proj.shape()) +
                      " does not match decoder width " + std::to_string(config.d_model));
  }
  if (params.kernel.shape()[0] != config.patch_size) {
    throw ConfigError("VTA kernel " + shape_str(params.kernel.shape()) +
                      " does not match patch size " + std::to_string(config.patch_size));
  }
  const ImageTensor padded = pad_to_patch_grid(image, config.patch_size);
  Tensor grid = conv2d_nonoverlap(padded.tensor(), params.kernel, params.conv_bias);
  const std::size_t gr = grid.shape()[0], gc = grid.shape()[1];
  Tensor flat = reshape(grid, {gr * gc, grid.shape()[2]});
  Tensor tokens = add_row_vector(matmul(flat, params.proj), params.proj_bias);
  if (config.patch_positions) {
    if (!params.row_pos.defined()) {
      throw ConfigError("patch_positions is on but the VTA has no position tables");
    }
    // Positions past the learned table reuse its last entry.
    const std::size_t last = params.row_pos.rows() - 1;
    std::vector<TokenId> row_ids, col_ids;
    for (std::size_t i = 0; i < gr; ++i) {
      for (std::size_t j = 0; j < gc; ++j) {
        row_ids.push_back(static_cast<TokenId>(std::min(i, last)));
        col_ids.push_back(static_cast<TokenId>(std::min(j, last)));
      }
    }
    tokens = add(tokens, add(embedding(params.row_pos, row_ids),
                             embedding(params.col_pos, col_ids)));
  }
  return {tokens, gr, gc};
}

PseudoTokens vta_refine(const PseudoTokens& in, const VtaParams& params,
                        const ModelConfig& config, std::vector<Tensor>* attention) {
  if (in.width() != params.w_query.rows()) {
    throw ShapeError("vta_refine: token width " + std::to_string(in.width()) +
                     " vs projection " + shape_str(params.w_query.shape()));
  }
  Tensor q = matmul(in.tokens, params.w_query);
  Tensor k = matmul(in.tokens, params.w_key);
  Tensor v = matmul(in.tokens, params.w_value);
  const std::size_t heads = config.vta_heads;
  Tensor out;
  if (heads == 1) {
    auto r = scaled_dot_attention(q, k, v);
    if (attention) attention->push_back(r.weights);
    out = r.output;
  } else {
    const std::size_t dh = in.width() / heads;
    std::vector<Tensor> parts;
    for (std::size_t h = 0; h < heads; ++h) {
      auto r = scaled_dot_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                    slice_cols(v, h * dh, dh));
      if (attention) attention->push_back(r.weights);
      parts.push_back(r.output);
    }
    out = concat_cols(parts);
  }
  if (config.vta_residual) out = add(in.tokens, out);
  return {out, in.grid_rows, in.grid_cols};
}

}  // namespace mudaif
