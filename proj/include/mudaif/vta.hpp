// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mudaif/config.hpp"
#include "mudaif/tensor.hpp"

namespace mudaif {

/// RGB image H×W×3 with every channel value in [0, 1].
class ImageTensor {
 public:
  /// Validates rank, channel count and value range.
  explicit ImageTensor(Tensor pixels);
  /// Shape check only; for tensors derived from an already validated image.
  struct ShapeOnly {};
  ImageTensor(Tensor pixels, ShapeOnly);
  static ImageTensor from_pixels(std::size_t height, std::size_t width,
                                 std::vector<double> rgb);

  std::size_t height() const { return pixels_.shape()[0]; }
  std::size_t width() const { return pixels_.shape()[1]; }
  const Tensor& tensor() const { return pixels_; }
  Tensor& tensor() { return pixels_; }

 private:
  Tensor pixels_;
};

/// N×d pseudo-text tokens, rows in raster (row-major patch) order.
struct PseudoTokens {
  Tensor tokens;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  std::size_t count() const { return tokens.rows(); }
  std::size_t width() const { return tokens.cols(); }
};

struct VtaParams {
  Tensor kernel;      // p×p×3×c_conv
  Tensor conv_bias;   // c_conv
  Tensor proj;        // c_conv×d
  Tensor proj_bias;   // d
  Tensor w_query;     // d×d
  Tensor w_key;       // d×d
  Tensor w_value;     // d×d
  Tensor row_pos;     // max_grid×d (used when patch_positions is on)
  Tensor col_pos;     // max_grid×d

  static VtaParams init(const ModelConfig& config, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// Zero-pads right and bottom so both extents are multiples of `patch`.
/// Differentiable with respect to the source pixels.
ImageTensor pad_to_patch_grid(const ImageTensor& image, std::size_t patch);

/// Patch convolution followed by a linear projection to the decoder width,
/// plus factorized 2-D patch positions when enabled. Pads internally.
PseudoTokens vta_embed(const ImageTensor& image, const VtaParams& params,
                       const ModelConfig& config);

/// Self-attention over the pseudo-tokens with value projection W_V. Single
/// head and no residual by default. `attention` (if non-null) receives one
/// N×N weight matrix per head.
PseudoTokens vta_refine(const PseudoTokens& tokens, const VtaParams& params,
                        const ModelConfig& config, std::vector<Tensor>* attention = nullptr);

}  // namespace mudaif
