// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "mudaif/training.hpp"

namespace mudaif {

std::vector<TokenId> decoder_input(std::span<const TokenId> response) {
  std::vector<TokenId> ids{kBosId};
  ids.insert(ids.end(), response.begin(), response.end());
  return ids;
}

std::vector<TokenId> decoder_targets(std::span<const TokenId> response) {
  std::vector<TokenId> ids(response.begin(), response.end());
  ids.push_back(kEosId);
  return ids;
}

Tensor sample_loss(const Model& model, const Sample& sample, bool with_prompt) {
  if (sample.response.empty()) {
    throw ContractError("sample '" + sample.id + "' has an empty response");
  }
  const auto input = decoder_input(sample.response);
  const auto targets = decoder_targets(sample.response);
  const std::span<const TokenId> prompt =
      with_prompt ? std::span<const TokenId>(sample.prompt) : std::span<const TokenId>();
  return cross_entropy_next_token(forward(model, sample.image, input, prompt), targets);
}

namespace {

Tensor batch_mean(const Model& model, std::span<const Sample> batch, bool with_prompt) {
  if (batch.empty()) throw ContractError("loss over an empty batch");
  Tensor total;
  for (const auto& s : batch) {
    Tensor l = sample_loss(model, s, with_prompt);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Tensor pretrain_loss(const Model& model, std::span<const Sample> batch) {
  return batch_mean(model, batch, false);
}

Tensor task_loss(const Model& model, std::span<const Sample> batch) {
  return batch_mean(model, batch, true);
}

void LossWeights::validate() const {
  if (!(pretrain >= 0.0) || !(task >= 0.0) || !std::isfinite(pretrain) || !std::isfinite(task)) {
    throw ConfigError("loss weights must be finite and non-negative");
  }
  if (pretrain == 0.0 && task == 0.0) throw ConfigError("loss weights are both zero");
}

LossWeights LossWeights::from(const ModelConfig& config) {
  return {config.lambda_pretrain, config.lambda_task};
}

Tensor combined_loss(const Tensor& lp, const Tensor& lt, const LossWeights& w) {
  w.validate();
  if (!lp.defined() && !lt.defined()) throw ContractError("combined_loss: no loss terms");
  // Unit weights pass the term through untouched so reductions are exact.
  auto weighted = [](const Tensor& t, double lambda) {
    return lambda == 1.0 ? t : scale(t, lambda);
  };
  if (!lt.defined()) return weighted(lp, w.pretrain);
  if (!lp.defined()) return weighted(lt, w.task);
  if (w.task == 0.0) return weighted(lp, w.pretrain);
  if (w.pretrain == 0.0) return weighted(lt, w.task);
  return add(weighted(lp, w.pretrain), weighted(lt, w.task));
}

}  // namespace mudaif
