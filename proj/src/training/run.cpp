// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include "mudaif/run.hpp"

namespace mudaif {

namespace fs = std::filesystem;

std::vector<Sample> load_samples(const data::Manifest& manifest, const std::string& split,
                                 const data::Vocabulary& vocab) {
  std::vector<Sample> out;
  for (const auto& r : manifest.records) {
    if (split != "all" && r.split != split) continue;
    Sample s{r.image, data::load_image(manifest.directory / r.image), {}, vocab.encode(r.caption)};
    if (r.prompt) s.prompt = vocab.encode(*r.prompt);
    out.push_back(std::move(s));
  }
  return out;
}

ImageTensor scene_image(const data::Scene& scene) {
  const auto bytes = data::render(scene);
  std::vector<double> rgb(bytes.size());
  std::transform(bytes.begin(), bytes.end(), rgb.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return ImageTensor::from_pixels(scene.height, scene.width, std::move(rgb));
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

fs::path materialize(const PhaseSpec& phase, std::size_t index, const fs::path& base_dir,
                     const fs::path& out_dir) {
  if (phase.data.manifest) {
    const auto& m = *phase.data.manifest;
    return m.is_absolute() ? m : base_dir / m;
  }
  return data::generate_dataset(*phase.data.synthetic, phase.data.n, phase.data.seed,
                                out_dir / "data" / ("phase" + std::to_string(index)));
}

}  // namespace

RunResult run_training(const RunConfig& config, const fs::path& out_dir) {
  if (config.phases.empty()) throw ConfigError("$.phases: at least one phase is required");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> manifest_paths;
  std::vector<data::Manifest> manifests;
  std::vector<data::DatasetRecord> all_records;
  for (std::size_t i = 0; i < config.phases.size(); ++i) {
    manifest_paths.push_back(materialize(config.phases[i], i, config.base_dir, out_dir));
    manifests.push_back(data::read_manifest(manifest_paths.back()));
    const auto& recs = manifests.back().records;
    all_records.insert(all_records.end(), recs.begin(), recs.end());
  }
  const data::Vocabulary vocab = data::build_vocab(all_records);

  ModelConfig mc = config.model;
  if (mc.vocab_size == 0) mc.vocab_size = vocab.size();
  if (mc.vocab_size < vocab.size()) {
    throw ConfigError("$.model.vocab_size: " + std::to_string(mc.vocab_size) +
                      " is smaller than the corpus vocabulary (" + std::to_string(vocab.size()) +
                      ")");
  }

  std::vector<TrainingPhase> phases;
  for (std::size_t i = 0; i < config.phases.size(); ++i) {
    const auto& spec = config.phases[i];
    TrainingPhase p;
    p.tag = spec.tag;
    p.samples = load_samples(manifests[i], spec.split, vocab);
    if (p.samples.empty()) {
      throw ConfigError("$.phases[" + std::to_string(i) + "].split: no records in split '" +
                        spec.split + "'");
    }
    p.epochs = spec.epochs;
    p.batch_size = spec.batch_size;
    p.lr = spec.lr;
    p.warmup_steps = spec.warmup_steps;
    p.freeze_vta = spec.freeze_vta;
    phases.push_back(std::move(p));
  }

  RunResult result{{}, vocab, Model::init(mc, config.seed), manifest_paths};
  TrainOptions options;
  options.optimizer = config.optimizer;
  result.report = train(result.model, phases, LossWeights::from(mc), config.seed, options);
  result.report.checkpoint_path = "checkpoint.bin";

  save_checkpoint(out_dir / "checkpoint.bin", result.model, vocab);
  std::string lines, timing;
  for (std::size_t i = 0; i < result.report.steps.size(); ++i) {
    const auto& s = result.report.steps[i];
    lines += nlohmann::json{{"phase", s.phase},
                            {"epoch", s.epoch},
                            {"step", s.step},
                            {"batch", s.batch_id},
                            {"loss", s.loss},
                            {"lr", s.lr},
                            {"grad_norm", s.grad_norm}}
                 .dump() +
             "\n";
    timing += nlohmann::json{{"step", s.step}, {"seconds", result.report.step_seconds[i]}}
                  .dump() +
              "\n";
  }
  write_text(out_dir / "report.jsonl", lines);
  write_text(out_dir / "timing.jsonl", timing);
  write_text(out_dir / "summary.json", summary_json(result).dump(2) + "\n");
  return result;
}

nlohmann::json summary_json(const RunResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  std::map<std::size_t, double> final_loss;
  for (const auto& e : result.report.epochs) {
    epochs.push_back({{"phase", e.phase},
                      {"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"perplexity", e.perplexity}});
    final_loss[e.phase] = e.mean_loss;
  }
  nlohmann::json finals = nlohmann::json::array();
  for (const auto& [phase, loss] : final_loss) finals.push_back(loss);
  return {{"checkpoint", result.report.checkpoint_path},
          {"config_hash", fnv1a64(canonical_config(result.model.config, result.vocab))},
          {"parameters", result.model.parameter_count()},
          {"vocab_size", result.vocab.size()},
          {"steps", result.report.steps.size()},
          {"epochs", epochs},
          {"final_phase_loss", finals}};
}

std::size_t thread_count_from_env() {
  const char* env = std::getenv("MUDAIF_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) return 1;
  return static_cast<std::size_t>(std::min<long>(n, 256));
}

nlohmann::json to_json(const EvalResult& r) {
  return {{"records", r.records},
          {"tokens", r.tokens},
          {"mean_nll", r.mean_nll},
          {"perplexity", r.perplexity},
          {"exact_match", r.exact_match},
          {"qa_records", r.qa_records},
          {"qa_exact_match", r.qa_exact_match},
          {"majority_answer", r.majority_answer},
          {"majority_baseline", r.majority_baseline}};
}

EvalResult evaluate(const Model& model, const data::Vocabulary& vocab,
                    const std::vector<Sample>& samples, std::size_t threads) {
  if (samples.empty()) throw ConfigError("evaluation set is empty");
  if (threads == 0) threads = thread_count_from_env();
  threads = std::min(threads, samples.size());

  struct PerSample {
    double nll = 0.0;
    bool match = false;
  };
  std::vector<PerSample> per(samples.size());
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t worker) {
    try {
      NoGradGuard no_grad;
      for (std::size_t i = worker; i < samples.size(); i += threads) {
        const auto& s = samples[i];
        const double mean = sample_loss(model, s, true).item();
        per[i].nll = mean * static_cast<double>(s.response.size() + 1);
        const auto out = generate(model, s.image, s.prompt, {}, model.config.max_seq_len, 0);
        per[i].match = out == s.response;
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalResult r;
  r.records = samples.size();
  double nll = 0.0;
  std::size_t matches = 0, qa_matches = 0;
  std::map<std::string, std::size_t> answers, qa_answers;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    nll += per[i].nll;
    r.tokens += s.response.size() + 1;
    matches += per[i].match;
    const std::string answer = vocab.decode(s.response);
    ++answers[answer];
    if (!s.prompt.empty()) {
      ++r.qa_records;
      qa_matches += per[i].match;
      ++qa_answers[answer];
    }
  }
  r.mean_nll = nll / static_cast<double>(r.tokens);
  r.perplexity = std::exp(r.mean_nll);
  r.exact_match = static_cast<double>(matches) / static_cast<double>(r.records);
  if (r.qa_records) {
    r.qa_exact_match = static_cast<double>(qa_matches) / static_cast<double>(r.qa_records);
  }
  const auto& pool = r.qa_records ? qa_answers : answers;
  const std::size_t denom = r.qa_records ? r.qa_records : r.records;
  std::size_t best = 0;
  for (const auto& [answer, count] : pool) {
    if (count > best) {  // map order makes ties resolve to the smallest string
      best = count;
      r.majority_answer = answer;
    }
  }
  r.majority_baseline = static_cast<double>(best) / static_cast<double>(denom);
  return r;
}

GradCheckRun run_grad_check(const RunConfig& config) {
  const auto& g = config.gradcheck;
  const auto start = std::chrono::steady_clock::now();
  GradCheckRun run;
  fault::ScopedGeluBackwardFault fault(g.gelu_backward_fault);
  if (g.kind == GradCheckKind::LinearToy) {
    run.result = grad_check_linear_toy(config.seed, g.step);
    run.parameters = run.result.checked;
  } else {
    std::mt19937_64 rng(g.data_seed);
    std::vector<data::Scene> scenes;
    std::vector<std::string> sentences;
    std::vector<std::pair<std::string, std::string>> texts;  // prompt, response
    for (std::size_t i = 0; i < g.samples; ++i) {
      scenes.push_back(data::sample_scene(g.scene, rng));
      // Alternate caption and question samples so both loss terms are exercised.
      if (i % 2 == 0) {
        texts.emplace_back("", data::caption_of(scenes.back()));
      } else {
        const auto q = data::sample_question(scenes.back(), rng);
        texts.emplace_back(q.prompt, q.answer);
      }
      sentences.push_back(texts.back().first);
      sentences.push_back(texts.back().second);
    }
    const auto vocab = data::Vocabulary::build(sentences);
    ModelConfig mc = config.model;
    if (mc.vocab_size == 0) mc.vocab_size = vocab.size();
    Model model = Model::init(mc, config.seed);
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      batch.push_back({"gradcheck" + std::to_string(i), scene_image(scenes[i]),
                       vocab.encode(texts[i].first), vocab.encode(texts[i].second)});
    }
    run.parameters = model.parameter_count();
    run.result = grad_check(model, batch, g.step);
  }
  run.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.passed = run.result.max_rel_error < g.threshold;
  return run;
}

std::vector<BenchRow> run_bench(const ModelConfig& config,
                                const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                std::size_t text_len, std::size_t repeats, std::uint64_t seed) {
  if (text_len == 0) throw ConfigError("bench text length must be at least 1");
  ModelConfig mc = config;
  if (mc.vocab_size == 0) mc.vocab_size = 64;
  std::size_t longest = 0;
  for (const auto& [h, w] : sizes) {
    const std::size_t p = mc.patch_size;
    longest = std::max(longest, ((h + p - 1) / p) * ((w + p - 1) / p));
  }
  mc.max_seq_len = std::max(mc.max_seq_len, longest + text_len);
  const Model model = Model::init(mc, seed);
  std::vector<TokenId> text(text_len, kEosId);
  text[0] = kBosId;

  std::vector<BenchRow> rows;
  for (const auto& [h, w] : sizes) {
    BenchRow row{h, w, count_params_flops(mc, h, w, text_len), 0.0};
    std::vector<double> pixels(h * w * 3, 0.5);
    const auto image = ImageTensor::from_pixels(h, w, std::move(pixels));
    NoGradGuard no_grad;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) forward(model, image, text);
    const double total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    row.forward_ms = total / static_cast<double>(std::max<std::size_t>(repeats, 1));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mudaif
