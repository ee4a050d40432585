// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "mudaif/training.hpp"

namespace mudaif {

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(options_.eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (!(options_.weight_decay >= 0.0) || !(options_.clip_norm >= 0.0)) {
    throw ConfigError("Adam weight_decay and clip_norm must be non-negative");
  }
  for (const auto& [_, t] : params_) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

double Adam::step(double lr, const std::function<bool(const std::string&)>& frozen) {
  ++t_;
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grads.push_back(params_[i].second.grad());
    if (frozen && frozen(params_[i].first)) continue;
    for (double g : grads.back()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  double clip = 1.0;
  if (options_.clip_norm > 0.0 && norm > options_.clip_norm) clip = options_.clip_norm / norm;

  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (frozen && frozen(params_[i].first)) continue;
    auto w = params_[i].second.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
      if (lr != 0.0) w[j] -= lr * (update + options_.weight_decay * w[j]);
    }
  }
  return norm;
}

double learning_rate(double base, std::size_t warmup_steps, std::size_t step_index) {
  if (warmup_steps == 0 || step_index >= warmup_steps) return base;
  return base * static_cast<double>(step_index + 1) / static_cast<double>(warmup_steps);
}

std::string to_string(PhaseTag tag) {
  switch (tag) {
    case PhaseTag::Pretrain: return "pretrain";
    case PhaseTag::Finetune: return "finetune";
    case PhaseTag::Mixed: return "mixed";
  }
  return "?";
}

PhaseTag phase_tag_from_string(const std::string& name) {
  if (name == "pretrain") return PhaseTag::Pretrain;
  if (name == "finetune") return PhaseTag::Finetune;
  if (name == "mixed") return PhaseTag::Mixed;
  throw ConfigError("unknown phase tag '" + name + "' (expected pretrain, finetune or mixed)");
}

TrainingDiverged::TrainingDiverged(std::size_t step, std::string batch_id,
                                   const std::string& detail)
    : NumericError("training diverged at step " + std::to_string(step) + " on batch " +
                   batch_id + ": " + detail),
      step_(step),
      batch_id_(std::move(batch_id)) {}

namespace {

void check_phase(const TrainingPhase& phase, std::size_t index) {
  const std::string where = "phase " + std::to_string(index) + " (" + to_string(phase.tag) + ")";
  if (phase.samples.empty()) throw ConfigError(where + ": no samples");
  if (phase.batch_size == 0) throw ConfigError(where + ": batch_size must be at least 1");
  if (!(phase.lr >= 0.0) || !std::isfinite(phase.lr)) {
    throw ConfigError(where + ": learning rate must be finite and non-negative");
  }
  for (const auto& s : phase.samples) {
    if (phase.tag == PhaseTag::Pretrain && !s.prompt.empty()) {
      throw ConfigError(where + ": sample '" + s.id + "' carries a prompt");
    }
    if (phase.tag == PhaseTag::Finetune && s.prompt.empty()) {
      throw ConfigError(where + ": sample '" + s.id + "' has no prompt");
    }
  }
}

Tensor phase_loss(const Model& model, PhaseTag tag, const std::vector<Sample>& batch,
                  const LossWeights& w) {
  switch (tag) {
    case PhaseTag::Pretrain: return pretrain_loss(model, batch);
    case PhaseTag::Finetune: return task_loss(model, batch);
    case PhaseTag::Mixed: break;
  }
  std::vector<Sample> captions, tasks;
  for (const auto& s : batch) (s.prompt.empty() ? captions : tasks).push_back(s);
  Tensor lp = captions.empty() ? Tensor() : pretrain_loss(model, captions);
  Tensor lt = tasks.empty() ? Tensor() : task_loss(model, tasks);
  return combined_loss(lp, lt, w);
}

}  // namespace

TrainReport train(Model& model, const std::vector<TrainingPhase>& phases, const LossWeights& w,
                  std::uint64_t seed, const TrainOptions& options) {
  w.validate();
  for (std::size_t i = 0; i < phases.size(); ++i) check_phase(phases[i], i);

  TrainReport report;
  Adam adam(model.named_parameters(), options.optimizer);
  std::size_t global_step = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const auto& phase = phases[p];
    const bool freeze = phase.freeze_vta;
    auto frozen = [freeze](const std::string& name) {
      return freeze && name.rfind("vta.", 0) == 0;
    };
    std::size_t phase_step = 0;
    std::vector<std::size_t> order(phase.samples.size());
    for (std::size_t e = 0; e < phase.epochs; ++e) {
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(seed ^ (0x51ed270b2a1f3c95ULL * (p + 1)) ^ (0x9e3779b97f4a7c15ULL * (e + 1)));
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0.0;
      std::size_t epoch_batches = 0;
      for (std::size_t start = 0; start < order.size(); start += phase.batch_size) {
        const auto clock_start = std::chrono::steady_clock::now();
        const std::size_t end = std::min(order.size(), start + phase.batch_size);
        std::vector<Sample> batch;
        std::vector<const Sample*> members;
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(phase.samples[order[i]]);
          members.push_back(&phase.samples[order[i]]);
        }
        StepRecord rec;
        rec.phase = p;
        rec.epoch = e;
        rec.step = global_step;
        rec.batch_id = "p" + std::to_string(p) + "/e" + std::to_string(e) + "/b" +
                       std::to_string(start / phase.batch_size);
        rec.lr = learning_rate(phase.lr, phase.warmup_steps, phase_step);
        model.zero_grad();
        try {
          Tensor loss = phase_loss(model, phase.tag, batch, w);
          rec.loss = loss.item();
          backward(loss);
          rec.grad_norm = adam.step(rec.lr, frozen);
        } catch (const NumericError& err) {
          throw TrainingDiverged(global_step, rec.batch_id, err.what());
        }
        if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
          throw TrainingDiverged(global_step, rec.batch_id, "non-finite loss or gradient norm");
        }
        epoch_loss += rec.loss;
        ++epoch_batches;
        report.step_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start)
                .count());
        if (options.on_step) options.on_step(rec, members);
        report.steps.push_back(std::move(rec));
        ++global_step;
        ++phase_step;
      }
      const double mean = epoch_loss / static_cast<double>(epoch_batches);
      report.epochs.push_back({p, e, mean, std::exp(mean)});
    }
  }
  model.zero_grad();
  return report;
}

}  // namespace mudaif
