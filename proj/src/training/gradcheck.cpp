// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "mudaif/init.hpp"
#include "mudaif/training.hpp"

namespace mudaif {

GradCheckResult grad_check(const std::vector<std::pair<std::string, Tensor>>& params,
                           const std::function<Tensor()>& loss, double step, double floor) {
  if (!(step > 0.0)) throw ParameterError("finite-difference step must be positive");
  for (auto [_, t] : params) t.zero_grad();
  backward(loss());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto [name, t] : params) {
    const auto analytic = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + step;
      const double up = loss().item();
      w[i] = saved - step;
      const double down = loss().item();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = rel;
        result.worst_parameter = name;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  for (auto [_, t] : params) t.zero_grad();
  return result;
}

GradCheckResult grad_check(Model& model, std::span<const Sample> batch, double step) {
  std::vector<Sample> captions, tasks;
  for (const auto& s : batch) (s.prompt.empty() ? captions : tasks).push_back(s);
  const auto weights = LossWeights::from(model.config);
  return grad_check(
      model.named_parameters(),
      [&] {
        Tensor lp = captions.empty() ? Tensor() : pretrain_loss(model, captions);
        Tensor lt = tasks.empty() ? Tensor() : task_loss(model, tasks);
        return combined_loss(lp, lt, weights);
      },
      step);
}

GradCheckResult grad_check_linear_toy(std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  Tensor x = init::normal({4, 3}, 1.0, rng);
  x.set_requires_grad(false);
  Tensor probe = init::normal({4, 2}, 1.0, rng);
  probe.set_requires_grad(false);
  std::vector<std::pair<std::string, Tensor>> params{
      {"weight", init::normal({3, 2}, 1.0, rng)},
      {"bias", init::normal({2}, 1.0, rng)},
  };
  return grad_check(
      params,
      [&] {
        Tensor y = add_row_vector(matmul(x, params[0].second), params[1].second);
        return sum(mul(y, probe));
      },
      step);
}

}  // namespace mudaif
