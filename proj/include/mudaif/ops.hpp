// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mudaif/tensor.hpp"

namespace mudaif {

using TokenId = std::int32_t;

/// Row-major a×b permission matrix for attention; `true` lets a query see a key.
class AttentionMask {
 public:
  AttentionMask(std::size_t rows, std::size_t cols, bool allowed = true)
      : rows_(rows), cols_(cols), allowed_(rows * cols, allowed ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t r, std::size_t c) const { return allowed_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool allowed) { allowed_[r * cols_ + c] = allowed; }

  /// Lower-triangular mask (query i sees keys 0..i).
  static AttentionMask causal(std::size_t n);

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> allowed_;
};

// Matrix algebra. All operands are rank-2 unless stated otherwise.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a length-c vector to every row of an r×c matrix.
Tensor add_row_vector(const Tensor& x, const Tensor& bias);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// Gathers rows of a V×d table.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

/// Row-wise softmax with max subtraction. Masked entries get weight exactly 0.
Tensor softmax_rows(const Tensor& x, const AttentionMask* mask = nullptr);
/// Tanh approximation of GELU.
Tensor gelu(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-8;
/// Normalizes each row (last axis) of a matrix to zero mean and unit
/// population variance, then applies `gain` and `shift`.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = kLayerNormEps);

/// Mean over positions of -log softmax(logits)[target].
Tensor cross_entropy_next_token(const Tensor& logits, std::span<const TokenId> targets);

/// Stride-p patch convolution: image H×W×Cin, kernel p×p×Cin×Cout, bias Cout.
/// H and W must already be multiples of p.
Tensor conv2d_nonoverlap(const Tensor& image, const Tensor& kernel, const Tensor& bias);

struct AttentionResult {
  Tensor output;   // a×d
  Tensor weights;  // a×b, rows sum to 1
};

/// softmax(Q Kᵀ / sqrt(d)) · Val, with optional key masking.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& val,
                                     const AttentionMask* mask = nullptr);

namespace fault {

/// While alive, GELU's backward pass scales its input gradient by `factor`.
/// Mutation-test fixture for the gradient checker; never enable in production.
class ScopedGeluBackwardFault {
 public:
  explicit ScopedGeluBackwardFault(double factor);
  ~ScopedGeluBackwardFault();
  ScopedGeluBackwardFault(const ScopedGeluBackwardFault&) = delete;
  ScopedGeluBackwardFault& operator=(const ScopedGeluBackwardFault&) = delete;

 private:
  double previous_;
};

}  // namespace fault

}  // namespace mudaif
