// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudaif/checkpoint.hpp"
#include "mudaif/data.hpp"
#include "mudaif/training.hpp"

namespace mudaif {

/// Where a phase gets its records: a generated synthetic set or an existing manifest.
struct DataSource {
  std::optional<data::SyntheticSceneSpec> synthetic;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> manifest;
};

struct PhaseSpec {
  PhaseTag tag = PhaseTag::Pretrain;
  DataSource data;
  std::string split = "train";
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double lr = 3e-4;
  std::size_t warmup_steps = 100;
  bool freeze_vta = false;
};

enum class GradCheckKind { Full, LinearToy };

struct GradCheckSpec {
  GradCheckKind kind = GradCheckKind::Full;
  std::size_t samples = 2;
  std::uint64_t data_seed = 1;
  data::SyntheticSceneSpec scene;
  double step = 1e-4;
  double threshold = 1e-4;
  double gelu_backward_fault = 1.0;  // 1 leaves the backward pass intact
};

/// Everything one training run needs. Relative manifest paths resolve
/// against `base_dir` (the directory of the config file).
struct RunConfig {
  ModelConfig model;
  std::vector<PhaseSpec> phases;
  AdamOptions optimizer;
  std::uint64_t seed = 0;
  GradCheckSpec gradcheck;
  std::filesystem::path base_dir;
};

/// Strict decoding; every ConfigError message starts with the JSON path.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
/// Reads and decodes a config file. Malformed JSON raises ConfigError at "$".
RunConfig load_run_config(const std::filesystem::path& path);

/// Images and token ids for the records of one split ("all" keeps every record).
std::vector<Sample> load_samples(const data::Manifest& manifest, const std::string& split,
                                 const data::Vocabulary& vocab);

ImageTensor scene_image(const data::Scene& scene);

struct RunResult {
  TrainReport report;
  data::Vocabulary vocab;
  Model model;
  std::vector<std::filesystem::path> manifests;  // one per phase
};

/// Materializes each phase's data under `out_dir/data`, builds the
/// vocabulary over all of it, trains, and writes checkpoint.bin,
/// report.jsonl, summary.json and timing.jsonl into `out_dir`.
RunResult run_training(const RunConfig& config, const std::filesystem::path& out_dir);

nlohmann::json summary_json(const RunResult& result);

struct EvalResult {
  std::size_t records = 0;
  std::size_t tokens = 0;
  double mean_nll = 0.0;
  double perplexity = 0.0;
  double exact_match = 0.0;
  std::size_t qa_records = 0;
  double qa_exact_match = 0.0;
  std::string majority_answer;
  double majority_baseline = 0.0;
};

nlohmann::json to_json(const EvalResult& result);

/// Token-level perplexity of the responses and greedy exact match. The
/// majority baseline predicts the most frequent answer of the QA records
/// (of all records when none carry a prompt). `threads` = 0 reads
/// MUDAIF_THREADS and falls back to one.
EvalResult evaluate(const Model& model, const data::Vocabulary& vocab,
                    const std::vector<Sample>& samples, std::size_t threads = 0);

/// Worker count from MUDAIF_THREADS, at least one.
std::size_t thread_count_from_env();

struct GradCheckRun {
  GradCheckResult result;
  std::size_t parameters = 0;
  double seconds = 0.0;
  bool passed = false;
};

GradCheckRun run_grad_check(const RunConfig& config);

struct BenchRow {
  std::size_t height = 0;
  std::size_t width = 0;
  CostComparison cost;
  double forward_ms = 0.0;
};

/// Analytic costs plus the measured mean forward time of a freshly
/// initialized model at each size.
std::vector<BenchRow> run_bench(const ModelConfig& config,
                                const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                std::size_t text_len, std::size_t repeats, std::uint64_t seed);

}  // namespace mudaif
