// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mudaif {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// One vertex of the dynamic graph. Interior nodes keep their parents alive and
// a closure that pushes `grad` into the parents' grad buffers.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until touched by backward()
  bool requires_grad = false;
  bool released = false;
  std::uint64_t seq = 0;  // creation order; parents always precede children
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles that participates in reverse-mode
/// differentiation. Copies are handles onto the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row-major 2-D literal, e.g. `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Writable view; only leaves may be mutated (optimizer updates, finite differences).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; zeros of the right shape if backward never reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();
  bool is_leaf() const;
  const std::string& op() const;

  /// New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach() const;

  // Graph plumbing for op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse-pass order of the graph that produced a loss. Entries are the
/// requires-grad nodes (leaves included) sorted by decreasing creation index,
/// which is a valid topological order because a node is always created after
/// its inputs.
class Tape {
 public:
  explicit Tape(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> ops() const;
  /// Runs the reverse pass once and releases every recorded closure.
  void replay();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Populates `grad` on every requires_grad ancestor of a scalar loss.
/// Gradients accumulate; callers zero them between steps.
void backward(const Tensor& loss);

using BackwardFn = std::function<void(detail::Node& self)>;

/// Records a custom differentiable op. `backward` receives the output node and
/// must accumulate into `self.parents[i]->grad_buffer()` for each parent that
/// requires grad. Used by the built-in ops and by test fixtures.
Tensor make_op(std::string name, Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, BackwardFn backward);

/// Throws NumericError naming `where` if any value is NaN or Inf.
void check_finite(std::span<const double> values, const std::string& where);

}  // namespace mudaif
