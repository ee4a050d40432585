// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mudaif/errors.hpp"
#include "mudaif/model.hpp"

namespace mudaif {

/// One training or evaluation example. `response` holds word ids only; the
/// decoder input is [bos, response...] and the targets are [response..., eos].
struct Sample {
  std::string id;
  ImageTensor image;
  std::vector<TokenId> prompt;
  std::vector<TokenId> response;
};

std::vector<TokenId> decoder_input(std::span<const TokenId> response);
std::vector<TokenId> decoder_targets(std::span<const TokenId> response);

/// Next-token cross-entropy of one sample, scored on response positions only.
/// The prompt is used as conditioning when `with_prompt` is set.
Tensor sample_loss(const Model& model, const Sample& sample, bool with_prompt);

/// Mean caption loss over a batch, ignoring any prompts.
Tensor pretrain_loss(const Model& model, std::span<const Sample> batch);
/// Mean response loss over a batch, conditioned on each sample's prompt.
Tensor task_loss(const Model& model, std::span<const Sample> batch);

struct LossWeights {
  double pretrain = 1.0;
  double task = 1.0;

  void validate() const;
  static LossWeights from(const ModelConfig& config);
};

/// λ_pretrain·lp + λ_task·lt. Either term may be undefined (absent), in which
/// case it contributes nothing.
Tensor combined_loss(const Tensor& lp, const Tensor& lt, const LossWeights& w);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // 0 disables clipping
};

class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamOptions options);

  /// Applies one update from the accumulated gradients and returns the global
  /// gradient norm measured before clipping. Parameters in `frozen` keep
  /// their values and moments.
  double step(double lr, const std::function<bool(const std::string&)>& frozen = {});
  std::size_t steps() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions options_;
  std::size_t t_ = 0;
};

/// Linear warmup to `base` over `warmup_steps` updates, then constant.
double learning_rate(double base, std::size_t warmup_steps, std::size_t step_index);

enum class PhaseTag { Pretrain, Finetune, Mixed };
std::string to_string(PhaseTag tag);
PhaseTag phase_tag_from_string(const std::string& name);

struct TrainingPhase {
  PhaseTag tag = PhaseTag::Pretrain;
  std::vector<Sample> samples;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double lr = 3e-4;
  std::size_t warmup_steps = 100;
  bool freeze_vta = false;
};

struct StepRecord {
  std::size_t phase = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;  // global update index, from 0
  std::string batch_id;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::size_t phase = 0;
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double perplexity = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_seconds;  // wall clock, kept apart from the deterministic fields
  std::string checkpoint_path;
};

/// Raised when a loss or gradient stops being finite.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(std::size_t step, std::string batch_id, const std::string& detail);
  std::size_t step() const { return step_; }
  const std::string& batch_id() const { return batch_id_; }

 private:
  std::size_t step_;
  std::string batch_id_;
};

struct TrainOptions {
  AdamOptions optimizer;
  /// Called after each update with the record and the samples of the batch.
  std::function<void(const StepRecord&, std::span<const Sample* const>)> on_step;
};

/// Runs the phases in order on `model`. Deterministic given `seed`.
TrainReport train(Model& model, const std::vector<TrainingPhase>& phases, const LossWeights& w,
                  std::uint64_t seed, const TrainOptions& options = {});

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Relative errors use max(|analytic|, |numeric|, floor) as the denominator.
inline constexpr double kGradCheckFloor = 1e-6;

/// Central finite differences on every scalar of every parameter against
/// autodiff gradients of `loss`.
GradCheckResult grad_check(const std::vector<std::pair<std::string, Tensor>>& params,
                           const std::function<Tensor()>& loss, double step = 1e-4,
                           double floor = kGradCheckFloor);

/// Gradient check of the combined objective on a batch: samples without a
/// prompt feed the pretrain term, samples with one feed the task term.
GradCheckResult grad_check(Model& model, std::span<const Sample> batch, double step = 1e-4);

/// Gradient check of a bias-carrying linear map under a linear loss.
GradCheckResult grad_check_linear_toy(std::uint64_t seed, double step = 1e-4);

struct CostBreakdown {
  std::size_t params = 0;
  std::size_t flops = 0;             // multiply-accumulates of one forward pass
  std::size_t patch_flops = 0;       // image → tokens (grows linearly with area)
  std::size_t vision_flops = 0;      // adapter refinement or encoder stack
  std::size_t fusion_flops = 0;      // co-attention, or the encoder connector
  std::size_t decoder_flops = 0;     // decoder blocks and output head
  std::size_t visual_tokens = 0;
};

struct CostComparison {
  CostBreakdown encoder_free;
  CostBreakdown encoder_based;  // same decoder plus a ViT-style encoder and connector
};

/// Multiply-accumulates of one attention layer with sequence s and width d:
/// four projections and the two s×s products.
std::size_t attention_layer_flops(std::size_t s, std::size_t d);

/// Closed-form parameter and forward cost for an image of height×width pixels
/// with `text_len` text and `prompt_len` prompt tokens.
CostComparison count_params_flops(const ModelConfig& config, std::size_t height,
                                  std::size_t width, std::size_t text_len,
                                  std::size_t prompt_len = 0);

}  // namespace mudaif
