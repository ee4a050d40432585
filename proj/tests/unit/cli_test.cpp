// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../support/temp_dir.hpp"

namespace mudaif {
namespace {

using mudaif::testing::TempDir;
using mudaif::testing::read_file;
using mudaif::testing::write_file;

struct Outcome {
  int code = -1;
  std::string out;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
Outcome run(const std::string& args) {
  const std::string cmd = std::string("\"") + MUDAIF_CLI_PATH + "\" " + args + " 2>&1";
  Outcome r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// A few seconds of training on a tiny synthetic set, shared by the tests
// that need a checkpoint.
class TrainedCli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    write_file(*dir_ / "run.json", R"({
      "seed": 2,
      "model": {"d_model": 8, "n_layers": 1, "n_heads": 2, "max_seq_len": 32, "patch_size": 8},
      "phases": [
        {"tag": "pretrain", "epochs": 2, "batch_size": 4, "lr": 0.003, "warmup_steps": 2,
         "data": {"synthetic": {"canvas_min": 16, "canvas_max": 16, "max_objects": 2}, "n": 8, "seed": 1}},
        {"tag": "finetune", "epochs": 1, "batch_size": 4, "lr": 0.001, "warmup_steps": 0,
         "data": {"synthetic": {"canvas_min": 16, "canvas_max": 16, "grammar": "qa",
                                "test_fraction": 0.5}, "n": 8, "seed": 2}}
      ]
    })");
    train_ = new Outcome(run("train --config " + q(*dir_ / "run.json") + " --out " + q(*dir_ / "out")));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete dir_;
  }
  static std::filesystem::path out() { return *dir_ / "out"; }
  static std::filesystem::path image() { return out() / "data" / "phase0" / "images" / "000000.ppm"; }
  static nlohmann::json first_record(int phase) {
    std::istringstream in(read_file(out() / "data" / ("phase" + std::to_string(phase)) / "manifest.jsonl"));
    std::string line;
    std::getline(in, line);
    return nlohmann::json::parse(line);
  }

  static TempDir* dir_;
  static Outcome* train_;
};

TempDir* TrainedCli::dir_ = nullptr;
Outcome* TrainedCli::train_ = nullptr;

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("make-data --spec x.json --n 3").code, 2);
  EXPECT_EQ(run("generate --checkpoint a.bin").code, 2);
}

TEST(Cli, HelpExitsWithZero) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("make-data"), std::string::npos);
}

TEST(Cli, MakeDataWritesOneLinePerRecord) {
  TempDir dir;
  write_file(dir / "spec.json", R"({"canvas_min": 16, "canvas_max": 24})");
  const auto r = run("make-data --spec " + q(dir / "spec.json") + " --n 1000 --seed 4 --out " +
                     q(dir / "data"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(read_file(dir / "data" / "manifest.jsonl")), 1000u);
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "images" / "000999.ppm"));
}

TEST(Cli, CorruptConfigExitsWithTwoAndNamesThePath) {
  TempDir dir;
  write_file(dir / "bad.json", "{\"seed\": 1, \"phases\": [{\"lr\": \"fast\"}]}");
  const auto r = run("train --config " + q(dir / "bad.json") + " --out " + q(dir / "o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("$.phases[0]"), std::string::npos) << r.out;
  write_file(dir / "broken.json", "{\"seed\": ");
  EXPECT_EQ(run("train --config " + q(dir / "broken.json") + " --out " + q(dir / "o")).code, 2);
  write_file(dir / "spec.json", "{\"canvas_min\": -3}");
  EXPECT_EQ(run("make-data --spec " + q(dir / "spec.json") + " --n 2 --out " + q(dir / "d")).code, 2);
}

TEST_F(TrainedCli, TrainWritesArtifactsAndSummary) {
  ASSERT_EQ(train_->code, 0) << train_->out;
  for (const auto* f : {"checkpoint.bin", "report.jsonl", "summary.json", "timing.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(out() / f)) << f;
  const auto summary = nlohmann::json::parse(read_file(out() / "summary.json"));
  // Two pretrain epochs of two batches, then one epoch over the train split.
  std::size_t finetune_train = 0;
  std::istringstream manifest(read_file(out() / "data" / "phase1" / "manifest.jsonl"));
  for (std::string line; std::getline(manifest, line);)
    finetune_train += nlohmann::json::parse(line).at("split") == "train";
  const std::size_t steps = 4 + (finetune_train + 3) / 4;
  EXPECT_EQ(summary.at("steps").get<std::size_t>(), steps);
  EXPECT_EQ(summary.at("epochs").size(), 3u);
  EXPECT_EQ(count_lines(read_file(out() / "report.jsonl")), steps);
}

TEST_F(TrainedCli, GenerateIsReproducible) {
  ASSERT_EQ(train_->code, 0) << train_->out;
  const std::string base = "generate --checkpoint " + q(out() / "checkpoint.bin") + " --image " + q(image());
  const auto greedy = run(base);
  ASSERT_EQ(greedy.code, 0) << greedy.out;
  EXPECT_EQ(run(base).out, greedy.out);
  const auto sampled = base + " --decode topk --top-k 3 --temperature 1.5 --seed 9";
  EXPECT_EQ(run(sampled).out, run(sampled).out);
  const std::string prompt = first_record(1).at("prompt");
  EXPECT_EQ(run(base + " --prompt \"" + prompt + "\"").code, 0);
}

TEST_F(TrainedCli, GenerateRejectsBadInputs) {
  ASSERT_EQ(train_->code, 0) << train_->out;
  const std::string base = "generate --checkpoint " + q(out() / "checkpoint.bin");
  EXPECT_EQ(run(base + " --image /nonexistent/x.ppm").code, 1);
  EXPECT_EQ(run(base + " --image " + q(image()) + " --decode temperature --temperature 0").code, 2);
  EXPECT_EQ(run(base + " --image " + q(image()) + " --decode topk --top-k 0").code, 2);
  EXPECT_EQ(run(base + " --image " + q(image()) + " --decode beam").code, 2);
  EXPECT_EQ(run(base + " --image " + q(image()) + " --prompt \"zebra?\"").code, 1);
  EXPECT_EQ(run("generate --checkpoint /nonexistent/c.bin --image " + q(image())).code, 1);
}

TEST_F(TrainedCli, EvalReportsMetrics) {
  ASSERT_EQ(train_->code, 0) << train_->out;
  const auto r = run("eval --checkpoint " + q(out() / "checkpoint.bin") + " --manifest " +
                     q(out() / "data" / "phase1" / "manifest.jsonl") + " --split all");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("records").get<std::size_t>(), 8u);
  EXPECT_GT(j.at("perplexity").get<double>(), 1.0);
  EXPECT_EQ(j.at("qa_records").get<std::size_t>(), 8u);
  EXPECT_GE(j.at("majority_baseline").get<double>(), 0.125);
}

TEST_F(TrainedCli, InspectAttentionWritesRowStochasticCsv) {
  ASSERT_EQ(train_->code, 0) << train_->out;
  // Two prompt words and two text words taken from the generated data.
  const std::string caption = first_record(0).at("caption");
  const std::string prompt = first_record(1).at("prompt");
  const std::string text = caption.substr(0, caption.find(' ', 2));
  const std::string prompt2 = prompt.substr(0, prompt.find(' ', prompt.find(' ') + 1));
  const auto r = run("inspect-attn --checkpoint " + q(out() / "checkpoint.bin") + " --image " +
                     q(image()) + " --text \"" + text + "\" --prompt \"" + prompt2 + "\" --out " +
                     q(out() / "attn"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto files = nlohmann::json::parse(r.out);
  // 16×16 at p=8: four visual rows, two prompt rows, three text rows.
  EXPECT_EQ(files.at("a_vt.csv"), nlohmann::json({4, 3}));
  EXPECT_EQ(files.at("a_tv.csv"), nlohmann::json({3, 4}));
  EXPECT_EQ(files.at("vta_h0.csv"), nlohmann::json({4, 4}));
  EXPECT_EQ(files.at("decoder_l0_h1.csv"), nlohmann::json({9, 9}));
  for (const auto& [name, shape] : files.items()) {
    std::istringstream in(read_file(out() / "attn" / name));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::istringstream cells(line);
      std::string cell;
      double total = 0.0;
      std::size_t cols = 0;
      while (std::getline(cells, cell, ',')) {
        const double v = std::stod(cell);
        EXPECT_GE(v, 0.0);
        total += v;
        ++cols;
      }
      EXPECT_EQ(cols, shape[1].get<std::size_t>()) << name;
      EXPECT_NEAR(total, 1.0, 1e-6) << name << " row " << rows;
      ++rows;
    }
    EXPECT_EQ(rows, shape[0].get<std::size_t>()) << name;
  }
}

TEST(Cli, GradcheckPassesAndDetectsAFault) {
  const auto ok = run(std::string("gradcheck --config ") +
                      q(std::filesystem::path(MUDAIF_SOURCE_DIR) / "configs" / "gradcheck_mini.json"));
  ASSERT_EQ(ok.code, 0) << ok.out;
  EXPECT_LT(nlohmann::json::parse(ok.out).at("max_rel_error").get<double>(), 1e-4);
  const auto bad = run(std::string("gradcheck --config ") +
                       q(std::filesystem::path(MUDAIF_SOURCE_DIR) / "tests" / "fixtures" /
                         "gradcheck_gelu_fault.json"));
  EXPECT_EQ(bad.code, 1) << bad.out;
}

TEST(Cli, BenchPrintsOneCsvRowPerSize) {
  TempDir dir;
  write_file(dir / "m.json", R"({"model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "patch_size": 16},
                                 "phases": []})");
  const auto r = run("bench --config " + q(dir / "m.json") + " --image-sizes 32,48x80 --repeats 1");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(r.out);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "height,width,tokens,params,encoder_params,flops,encoder_flops,forward_ms");
  EXPECT_EQ(row1.rfind("32,32,4,", 0), 0u) << row1;
  EXPECT_EQ(row2.rfind("48,80,15,", 0), 0u) << row2;
  EXPECT_EQ(run("bench --config " + q(dir / "m.json") + " --image-sizes 0").code, 2);
}

}  // namespace
}  // namespace mudaif
