// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mudaif/errors.hpp"

namespace mudaif {

namespace {

thread_local double t_gelu_backward_factor = 1.0;

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> out,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m×k] += g[m×n] · b[k×n]ᵀ
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> out,
             std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      out[i * k + p] += acc;
    }
  }
}

// out[k×n] += a[m×k]ᵀ · g[m×n]
void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> out,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* orow = out.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data(), b.data(), out, m, k, n);
  return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) gemm_nt(self.grad, bn.value, an.grad_buffer(), m, n, k);
    if (bn.requires_grad) gemm_tn(an.value, self.grad, bn.grad_buffer(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_op("transpose", {c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) {
      auto g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_op("scale", a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_row_vector(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_vector");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw ShapeError("add_row_vector: bias " + shape_str(bias.shape()) + " vs rows of width " +
                     std::to_string(c));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return make_op("add_row_vector", {r, c}, std::move(out), {x, bias},
                 [r, c](detail::Node& self) {
                   if (self.parents[0]->requires_grad) {
                     auto g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                   if (self.parents[1]->requires_grad) {
                     auto g = self.parents[1]->grad_buffer();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make_op("sum", {1}, {s}, {x}, [](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& e : g) e += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.size());
  return scale(sum(x), 1.0 / n);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw ShapeError("concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    total += p.rows();
  }
  return make_op("concat_rows", {total, c}, std::move(out),
                 std::vector<Tensor>(parts.begin(), parts.end()),
                 [offsets](detail::Node& self) {
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     auto& p = *self.parents[k];
                     if (!p.requires_grad) continue;
                     auto g = p.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
                   }
                 });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t c = x.cols();
  if (begin + count > x.rows() || count == 0) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") outside " + shape_str(x.shape()));
  }
  const auto v = x.data();
  std::vector<double> out(v.begin() + begin * c, v.begin() + (begin + count) * c);
  return make_op("slice_rows", {count, c}, std::move(out), {x}, [begin, c](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths, offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw ShapeError("concat_cols: height mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.begin() + i * widths[k], widths[k], out.begin() + i * total + offsets[k]);
  }
  return make_op("concat_cols", {r, total}, std::move(out),
                 std::vector<Tensor>(parts.begin(), parts.end()),
                 [r, total, widths, offsets](detail::Node& self) {
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     auto& p = *self.parents[k];
                     if (!p.requires_grad) continue;
                     auto g = p.grad_buffer();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < widths[k]; ++j)
                         g[i * widths[k] + j] += self.grad[i * total + offsets[k] + j];
                   }
                 });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  if (begin + count > c || count == 0) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") outside " + shape_str(x.shape()));
  }
  const auto v = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(v.begin() + i * c + begin, count, out.begin() + i * count);
  return make_op("slice_cols", {r, count}, std::move(out), {x},
                 [r, c, begin, count](detail::Node& self) {
                   auto g = self.parents[0]->grad_buffer();
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < count; ++j)
                       g[i * c + begin + j] += self.grad[i * count + j];
                 });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  std::vector<TokenId> idv(ids.begin(), ids.end());
  std::vector<double> out(idv.size() * d);
  const auto v = table.data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw IndexError("embedding: token id " + std::to_string(idv[i]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(v.begin() + idv[i] * d, d, out.begin() + i * d);
  }
  return make_op("embedding", {idv.size(), d}, std::move(out), {table},
                 [idv, d](detail::Node& self) {
                   auto g = self.parents[0]->grad_buffer();
                   for (std::size_t i = 0; i < idv.size(); ++i)
                     for (std::size_t j = 0; j < d; ++j)
                       g[static_cast<std::size_t>(idv[i]) * d + j] += self.grad[i * d + j];
                 });
}

Tensor softmax_rows(const Tensor& x, const AttentionMask* mask) {
  require_matrix(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("softmax_rows: empty row dimension");
  if (mask && (mask->rows() != r || mask->cols() != c)) {
    throw ShapeError("softmax_rows: mask " + std::to_string(mask->rows()) + "x" +
                     std::to_string(mask->cols()) + " vs logits " + shape_str(x.shape()));
  }
  const auto v = x.data();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || mask->allowed(i, j)) mx = std::max(mx, v[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateMaskError("softmax_rows: query row " + std::to_string(i) +
                                " has every key masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !mask->allowed(i, j)) continue;
      out[i * c + j] = std::exp(v[i * c + j] - mx);
      total += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return make_op("softmax_rows", {r, c}, std::move(out), {x}, [r, c](detail::Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kAlpha = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kBeta = 0.044715;
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u = kAlpha * (v[i] + kBeta * v[i] * v[i] * v[i]);
    out[i] = 0.5 * v[i] * (1.0 + std::tanh(u));
  }
  return make_op("gelu", x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    auto g = in.grad_buffer();
    const double fault = t_gelu_backward_factor;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = in.value[i];
      const double u = kAlpha * (z + kBeta * z * z * z);
      const double t = std::tanh(u);
      const double du = kAlpha * (1.0 + 3.0 * kBeta * z * z);
      const double dy = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
      g[i] += fault * self.grad[i] * dy;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t r = x.rows(), d = x.cols();
  if (gain.size() != d || shift.size() != d) {
    throw ShapeError("layer_norm: gain/shift " + shape_str(gain.shape()) + "/" +
                     shape_str(shift.shape()) + " vs width " + std::to_string(d));
  }
  const auto v = x.data();
  const auto gv = gain.data(), sv = shift.data();
  std::vector<double> xhat(r * d), inv_std(r), out(r * d);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (v[i * d + j] - mu) * (v[i * d + j] - mu);
    var /= static_cast<double>(d);
    if (!std::isfinite(var)) {
      throw NumericError("layer_norm: non-finite variance in row " + std::to_string(i));
    }
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (v[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gv[j] + sv[j];
    }
  }
  return make_op(
      "layer_norm", {r, d}, std::move(out), {x, gain, shift},
      [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& sn = *self.parents[2];
        if (gn.requires_grad) {
          auto g = gn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j] * xhat[i * d + j];
        }
        if (sn.requires_grad) {
          auto g = sn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
        }
        if (xn.requires_grad) {
          auto g = xn.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < r; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = self.grad[i * d + j] * gn.value[j];
              m1 += dxh;
              m2 += dxh * xhat[i * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = self.grad[i * d + j] * gn.value[j];
              g[i * d + j] += inv_std[i] * (dxh - m1 - xhat[i * d + j] * m2);
            }
          }
        }
      });
}

Tensor cross_entropy_next_token(const Tensor& logits, std::span<const TokenId> targets) {
  require_matrix(logits, "cross_entropy_next_token");
  const std::size_t len = logits.rows(), vocab = logits.cols();
  if (targets.size() != len) {
    throw ShapeError("cross_entropy_next_token: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(len) + " positions");
  }
  if (len == 0) throw ShapeError("cross_entropy_next_token: no positions");
  std::vector<TokenId> tv(targets.begin(), targets.end());
  const auto v = logits.data();
  std::vector<double> probs(len * vocab);
  double loss = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    if (tv[i] < 0 || static_cast<std::size_t>(tv[i]) >= vocab) {
      throw IndexError("cross_entropy_next_token: target id " + std::to_string(tv[i]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    const double* row = v.data() + i * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double total = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      probs[i * vocab + j] = std::exp(row[j] - mx);
      total += probs[i * vocab + j];
    }
    for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] /= total;
    loss += std::log(total) + mx - row[tv[i]];
  }
  loss /= static_cast<double>(len);
  return make_op("cross_entropy", {1}, {loss}, {logits},
                 [len, vocab, tv = std::move(tv), probs = std::move(probs)](detail::Node& self) {
                   auto g = self.parents[0]->grad_buffer();
                   const double up = self.grad[0] / static_cast<double>(len);
                   for (std::size_t i = 0; i < len; ++i) {
                     for (std::size_t j = 0; j < vocab; ++j) g[i * vocab + j] += up * probs[i * vocab + j];
                     g[i * vocab + static_cast<std::size_t>(tv[i])] -= up;
                   }
                 });
}

Tensor conv2d_nonoverlap(const Tensor& image, const Tensor& kernel, const Tensor& bias) {
  if (image.rank() != 3 || kernel.rank() != 4) {
    throw ShapeError("conv2d_nonoverlap: image " + shape_str(image.shape()) + ", kernel " +
                     shape_str(kernel.shape()) + " (expected HxWxC and pxpxCinxCout)");
  }
  const auto& is = image.shape();
  const auto& ks = kernel.shape();
  const std::size_t h = is[0], w = is[1], cin = is[2];
  const std::size_t p = ks[0], cout = ks[3];
  if (ks[1] != p || ks[2] != cin || bias.size() != cout) {
    throw ShapeError("conv2d_nonoverlap: kernel " + shape_str(ks) + " / bias " +
                     shape_str(bias.shape()) + " incompatible with image " + shape_str(is));
  }
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ShapeError("conv2d_nonoverlap: image extents " + std::to_string(h) + "x" +
                     std::to_string(w) + " are not multiples of patch size " +
                     std::to_string(p) + "; pad the image to the patch grid first");
  }
  const std::size_t gh = h / p, gw = w / p;
  const std::size_t patch_len = p * p * cin;
  const auto iv = image.data();
  const auto kv = kernel.data();
  const auto bv = bias.data();
  // Kernel flattened row-major is already (p·p·cin)×cout.
  std::vector<double> out(gh * gw * cout);
  std::vector<double> patch(patch_len);
  for (std::size_t gi = 0; gi < gh; ++gi) {
    for (std::size_t gj = 0; gj < gw; ++gj) {
      for (std::size_t u = 0; u < p; ++u)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < cin; ++c)
            patch[(u * p + x) * cin + c] = iv[((gi * p + u) * w + gj * p + x) * cin + c];
      double* o = out.data() + (gi * gw + gj) * cout;
      std::copy(bv.begin(), bv.end(), o);
      for (std::size_t q = 0; q < patch_len; ++q) {
        const double pv = patch[q];
        if (pv == 0.0) continue;
        const double* krow = kv.data() + q * cout;
        for (std::size_t oc = 0; oc < cout; ++oc) o[oc] += pv * krow[oc];
      }
    }
  }
  return make_op(
      "conv2d_nonoverlap", {gh, gw, cout}, std::move(out), {image, kernel, bias},
      [w, cin, p, cout, gh, gw, patch_len](detail::Node& self) {
        auto& in = *self.parents[0];
        auto& kn = *self.parents[1];
        auto& bn = *self.parents[2];
        for (std::size_t gi = 0; gi < gh; ++gi) {
          for (std::size_t gj = 0; gj < gw; ++gj) {
            const double* go = self.grad.data() + (gi * gw + gj) * cout;
            if (bn.requires_grad) {
              auto gb = bn.grad_buffer();
              for (std::size_t oc = 0; oc < cout; ++oc) gb[oc] += go[oc];
            }
            for (std::size_t q = 0; q < patch_len; ++q) {
              const std::size_t u = q / (p * cin), x = (q / cin) % p, c = q % cin;
              const std::size_t idx = ((gi * p + u) * w + gj * p + x) * cin + c;
              const double* krow = kn.value.data() + q * cout;
              if (kn.requires_grad) {
                auto gk = kn.grad_buffer();
                const double pv = in.value[idx];
                for (std::size_t oc = 0; oc < cout; ++oc) gk[q * cout + oc] += pv * go[oc];
              }
              if (in.requires_grad) {
                double acc = 0.0;
                for (std::size_t oc = 0; oc < cout; ++oc) acc += krow[oc] * go[oc];
                in.grad_buffer()[idx] += acc;
              }
            }
          }
        }
      });
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& val,
                                     const AttentionMask* mask) {
  require_matrix(q, "scaled_dot_attention");
  require_matrix(k, "scaled_dot_attention");
  require_matrix(val, "scaled_dot_attention");
  if (q.cols() != k.cols() || k.rows() != val.rows()) {
    throw ShapeError("scaled_dot_attention: Q " + shape_str(q.shape()) + ", K " +
                     shape_str(k.shape()) + ", V " + shape_str(val.shape()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d), mask);
  return {matmul(weights, val), weights};
}

namespace fault {

ScopedGeluBackwardFault::ScopedGeluBackwardFault(double factor)
    : previous_(t_gelu_backward_factor) {
  t_gelu_backward_factor = factor;
}

ScopedGeluBackwardFault::~ScopedGeluBackwardFault() { t_gelu_backward_factor = previous_; }

}  // namespace fault

}  // namespace mudaif
