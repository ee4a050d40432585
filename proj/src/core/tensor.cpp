// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mudaif/errors.hpp"

namespace mudaif {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> value,
                                       bool requires_grad) {
  if (shape_size(shape) != value.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " cannot hold " +
                     std::to_string(value.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_finite(values, "Tensor::from");
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() needs a matrix, got " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() needs a matrix, got " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Tensor::data() const {
  shape();
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  shape();
  if (node_->op != "leaf") {
    throw StateError("only leaf tensors may be mutated in place");
  }
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto c = cols();
  if (row >= rows() || col >= c) throw IndexError("at() out of range");
  return node_->value[row * c + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw StateError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  shape();
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

bool Tensor::is_leaf() const {
  shape();
  return node_->parents.empty() && !node_->backward_fn && node_->op == "leaf";
}

const std::string& Tensor::op() const {
  shape();
  return node_->op;
}

Tensor Tensor::detach() const {
  return Tensor(new_node(shape(), node_->value, false));
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void check_finite(std::span<const double> values, const std::string& where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(where + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor make_op(std::string name, Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, BackwardFn backward) {
  check_finite(value, name);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(value), needs_grad);
  node->op = std::move(name);
  if (needs_grad) {
    for (const auto& in : inputs) {
      if (in.node()->released) {
        throw StateError("op '" + node->op + "' consumes a tensor whose graph was already "
                         "differentiated; rebuild the forward pass");
      }
      node->parents.push_back(in.node());
    }
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape::Tape(const Tensor& loss) : root_(loss.node()) {
  if (!root_) throw ContractError("backward on undefined tensor");
  if (shape_size(root_->shape) != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(root_->shape));
  }
  if (root_->released) {
    throw StateError("backward already ran on this graph; rebuild the forward pass first");
  }
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root_.get()};
  std::vector<std::shared_ptr<detail::Node>> found;
  if (root_->requires_grad) found.push_back(root_);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (!p->requires_grad || !seen.insert(p.get()).second) continue;
      found.push_back(p);
      stack.push_back(p.get());
    }
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });
  order_ = std::move(found);
}

std::vector<std::string> Tape::ops() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.push_back(n->op);
  return names;
}

void Tape::replay() {
  if (root_->released) {
    throw StateError("backward already ran on this graph; rebuild the forward pass first");
  }
  if (!root_->requires_grad) return;
  // Interior gradients are per-pass scratch; leaves accumulate across passes.
  for (const auto& n : order_) {
    if (n->backward_fn) n->grad.clear();
  }
  root_->grad_buffer()[0] += 1.0;
  for (const auto& n : order_) {
    if (!n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
  }
  for (const auto& n : order_) {
    if (!n->backward_fn) continue;
    check_finite(n->grad, "backward through '" + n->op + "'");
    n->backward_fn = nullptr;
    n->parents.clear();
    n->released = true;
  }
  root_->released = true;
}

void backward(const Tensor& loss) { Tape(loss).replay(); }

}  // namespace mudaif
