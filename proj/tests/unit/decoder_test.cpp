// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "../oracles/oracles.hpp"
#include "mudaif/errors.hpp"
#include "mudaif/model.hpp"

namespace mudaif {
namespace {

ImageTensor random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> px(h * w * 3);
  for (auto& v : px) v = unit(rng);
  return ImageTensor::from_pixels(h, w, std::move(px));
}

ModelConfig tiny(std::size_t vocab = 12) {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.vocab_size = vocab;
  c.max_seq_len = 40;
  c.patch_size = 4;
  c.max_patch_grid = 4;
  c.zero_init_head = false;
  return c;
}

std::vector<TokenId> random_text(std::size_t len, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenId> tok(3, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> t{kBosId};
  while (t.size() < len) t.push_back(tok(rng));
  return t;
}

bool bitwise_equal_rows(const Tensor& a, const Tensor& b, std::size_t rows) {
  return std::memcmp(a.data().data(), b.data().data(), rows * a.cols() * sizeof(double)) == 0;
}

// Deterministic, hand-chosen values: entry i of every parameter is
// 0.1·(i mod 7) − 0.3, with layer-norm gains at 1 and shifts at 0.
Model minimal_model() {
  ModelConfig c;
  c.d_model = 2;
  c.n_layers = 1;
  c.n_heads = 1;
  c.vocab_size = 2;
  c.max_seq_len = 4;
  c.patch_size = 2;
  c.max_patch_grid = 1;
  c.ffn_mult = 1;
  c.zero_init_head = false;
  Model m = Model::init(c, 0);
  for (auto& [name, t] : m.named_parameters()) {
    auto w = t.mutable_data();
    const bool gain = name.find("norm_gain") != std::string::npos;
    const bool shift = name.find("norm_shift") != std::string::npos;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = gain ? 1.0 : shift ? 0.0 : 0.1 * static_cast<double>(i % 7) - 0.3;
    }
  }
  return m;
}

TEST(Forward, MinimalConfigMatchesHandExecutedPass) {
  const Model m = minimal_model();
  const auto image = ImageTensor::from_pixels(2, 2, {0.0, 0.5, 1.0, 0.25, 0.75, 0.0,
                                                     1.0, 1.0, 0.5, 0.0, 0.0, 0.2});
  const std::vector<TokenId> text{kBosId};
  const Tensor logits = forward(m, image, text);
  ASSERT_EQ(logits.shape(), (Shape{1, 2}));
  const auto ref = oracle::forward(m, image, text);
  EXPECT_NEAR(logits.at(0, 0), ref.at(0, 0), 1e-12);
  EXPECT_NEAR(logits.at(0, 1), ref.at(0, 1), 1e-12);
  // Frozen from the loop oracle above.
  EXPECT_NEAR(logits.at(0, 0), -0.10000008912725045, 1e-12);
  EXPECT_NEAR(logits.at(0, 1), -8.9127250413323367e-08, 1e-12);
}

TEST(Forward, MatchesLoopOracleWithPromptAndHeads) {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = tiny();
    c.vta_heads = seed % 2 ? 2 : 1;
    c.vta_residual = seed % 3 == 0;
    c.patch_positions = seed != 4;
    c.tie_embeddings = seed == 2;
    const Model m = Model::init(c, seed);
    const auto image = random_image(6 + seed, 9, rng);
    const auto text = random_text(4, c.vocab_size, rng);
    const std::vector<TokenId> prompt{3, 5, 4};
    const auto logits = forward(m, image, text, seed % 2 ? std::span<const TokenId>(prompt)
                                                         : std::span<const TokenId>());
    const auto ref = oracle::forward(m, image, text,
                                     seed % 2 ? std::span<const TokenId>(prompt) : std::span<const TokenId>());
    ASSERT_EQ(logits.size(), ref.v.size());
    for (std::size_t i = 0; i < ref.v.size(); ++i) EXPECT_NEAR(logits.data()[i], ref.v[i], 1e-9);
  }
}

TEST(Forward, IsCausalOverTextPositions) {
  std::mt19937_64 rng(22);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = tiny();
    const Model m = Model::init(c, seed);
    const auto image = random_image(8, 8, rng);
    auto text = random_text(6, c.vocab_size, rng);
    const std::vector<TokenId> prompt{4, 7};
    const Tensor base = forward(m, image, text, prompt);
    const std::size_t j = 1 + seed % 5;
    text[j] = static_cast<TokenId>(3 + (text[j] - 3 + 1) % (c.vocab_size - 3));
    const Tensor changed = forward(m, image, text, prompt);
    EXPECT_TRUE(bitwise_equal_rows(base, changed, j)) << "seed " << seed << " j " << j;
    EXPECT_FALSE(bitwise_equal_rows(base, changed, j + 1)) << "perturbation had no effect";
  }
}

TEST(Forward, DifferentImagesGiveDifferentLogits) {
  std::mt19937_64 rng(23);
  int differ = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Model m = Model::init(tiny(), seed);
    const auto text = random_text(4, 12, rng);
    const Tensor a = forward(m, random_image(8, 8, rng), text);
    const Tensor b = forward(m, random_image(8, 8, rng), text);
    differ += !bitwise_equal_rows(a, b, a.rows());
  }
  EXPECT_GE(differ, 99);
}

TEST(Forward, AnySequenceWithinCapacityRuns) {
  std::mt19937_64 rng(24);
  const auto c = tiny();
  const Model m = Model::init(c, 1);
  for (std::size_t h : {1u, 4u, 7u, 12u})
    for (std::size_t w : {3u, 8u, 16u}) {
      const std::size_t n = ((h + 3) / 4) * ((w + 3) / 4);
      for (std::size_t l : {1u, 5u}) {
        if (n + 2 + l > c.max_seq_len) continue;
        const std::vector<TokenId> prompt{5, 6};
        const auto logits = forward(m, random_image(h, w, rng), random_text(l, 12, rng), prompt);
        EXPECT_EQ(logits.shape(), (Shape{l, 12}));
      }
    }
}

TEST(Forward, OverflowIsALengthError) {
  std::mt19937_64 rng(25);
  const Model m = Model::init(tiny(), 1);
  // 32×32 at p=4 gives 64 visual rows, beyond max_seq_len 40.
  EXPECT_THROW(forward(m, random_image(32, 32, rng), random_text(2, 12, rng)), LengthError);
}

TEST(Forward, TextMustStartWithBos) {
  std::mt19937_64 rng(26);
  const Model m = Model::init(tiny(), 1);
  const std::vector<TokenId> text{5, 6};
  EXPECT_THROW(forward(m, random_image(4, 4, rng), text), ContractError);
}

TEST(Forward, VocabularyMismatchIsAConfigError) {
  std::mt19937_64 rng(27);
  Model m = Model::init(tiny(), 1);
  m.config.vocab_size = 20;
  EXPECT_THROW(forward(m, random_image(4, 4, rng), random_text(2, 12, rng)), ConfigError);
}

TEST(Forward, EveryAttentionRowIsNormalized) {
  std::mt19937_64 rng(28);
  const Model m = Model::init(tiny(), 3);
  ForwardTrace trace;
  const std::vector<TokenId> prompt{3, 4};
  forward(m, random_image(8, 12, rng), random_text(5, 12, rng), prompt, &trace);
  std::vector<Tensor> maps = trace.vta_attention;
  maps.push_back(trace.visual_to_text);
  maps.push_back(trace.text_to_visual);
  for (const auto& layer : trace.decoder_attention)
    for (const auto& h : layer) maps.push_back(h);
  EXPECT_EQ(maps.size(), 1u + 2u + 4u);
  for (const auto& mtx : maps)
    for (std::size_t i = 0; i < mtx.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < mtx.cols(); ++j) s += mtx.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  EXPECT_EQ(trace.visual_rows, 6u);
  EXPECT_EQ(trace.prompt_rows, 2u);
  EXPECT_EQ(trace.text_rows, 5u);
}

TEST(Forward, StrictSumPathNeedsEqualLengths) {
  std::mt19937_64 rng(29);
  auto c = tiny();
  c.fusion = FusionMode::StrictSum;
  const Model m = Model::init(c, 2);
  const auto image = random_image(8, 8, rng);  // N = 4
  EXPECT_EQ(forward(m, image, random_text(4, 12, rng)).rows(), 4u);
  EXPECT_THROW(forward(m, image, random_text(3, 12, rng)), ModeError);
}

TEST(NextToken, UntrainedZeroHeadIsUniform) {
  std::mt19937_64 rng(30);
  auto c = tiny(64);
  c.zero_init_head = true;
  const Model m = Model::init(c, 5);
  const auto dist = next_token_distribution(m, random_image(8, 8, rng), std::vector<TokenId>{kBosId});
  ASSERT_EQ(dist.size(), 64u);
  for (double p : dist) EXPECT_NEAR(p, 1.0 / 64, 1e-15);
}

TEST(NextToken, MatchesLastRowSoftmaxOfForward) {
  std::mt19937_64 rng(31);
  const Model m = Model::init(tiny(), 6);
  const auto image = random_image(8, 8, rng);
  const auto text = random_text(5, 12, rng);
  const auto dist = next_token_distribution(m, image, text);
  const auto logits = oracle::of(forward(m, image, text));
  oracle::Mat last(1, logits.c);
  for (std::size_t j = 0; j < logits.c; ++j) last.at(0, j) = logits.at(logits.r - 1, j);
  const auto ref = oracle::softmax_rows(last);
  double total = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    EXPECT_NEAR(dist[j], ref.v[j], 1e-12);
    total += dist[j];
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Generate, GreedyIsIdempotent) {
  std::mt19937_64 rng(32);
  const Model m = Model::init(tiny(), 7);
  const auto image = random_image(8, 8, rng);
  const std::vector<TokenId> prompt{3};
  const auto a = generate(m, image, prompt, {}, 10, 1);
  const auto b = generate(m, image, prompt, {}, 10, 99);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.size(), 10u);
}

TEST(Generate, StopsAtEndOfSequence) {
  std::mt19937_64 rng(33);
  auto c = tiny();
  Model m = Model::init(c, 8);
  // Bias the head so that eos always wins.
  for (auto& v : m.decoder.head.mutable_data()) v = 0.0;
  m.decoder.head_bias.mutable_data()[kEosId] = 5.0;
  EXPECT_TRUE(generate(m, random_image(8, 8, rng), {}, {}, 10, 0).empty());
}

TEST(Generate, TinyTemperatureMatchesGreedy) {
  std::mt19937_64 rng(34);
  const Model m = Model::init(tiny(), 9);
  const auto image = random_image(8, 8, rng);
  const auto greedy = generate(m, image, {}, {}, 8, 0);
  DecodeOptions cold{DecodeStrategy::Temperature, 1e-6, 0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(generate(m, image, {}, cold, 8, seed), greedy) << "seed " << seed;
  }
}

TEST(Generate, SampledModesAreReproducible) {
  std::mt19937_64 rng(35);
  const Model m = Model::init(tiny(), 10);
  const auto image = random_image(8, 8, rng);
  DecodeOptions warm{DecodeStrategy::TopK, 1.5, 4};
  EXPECT_EQ(generate(m, image, {}, warm, 8, 42), generate(m, image, {}, warm, 8, 42));
}

TEST(Generate, InvalidDecodeParametersAreRejected) {
  std::mt19937_64 rng(36);
  const Model m = Model::init(tiny(), 11);
  const auto image = random_image(8, 8, rng);
  EXPECT_THROW(generate(m, image, {}, {DecodeStrategy::Temperature, 0.0, 0}, 4, 0), ParameterError);
  EXPECT_THROW(generate(m, image, {}, {DecodeStrategy::Temperature, -1.0, 0}, 4, 0), ParameterError);
  EXPECT_THROW(generate(m, image, {}, {DecodeStrategy::TopK, 1.0, 0}, 4, 0), ParameterError);
  EXPECT_THROW(generate(m, image, {}, {}, 0, 0), ParameterError);
}

double chi_square(const std::vector<int>& counts, const std::vector<double>& probs, int n) {
  double chi = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * n;
    chi += (counts[i] - e) * (counts[i] - e) / e;
  }
  return chi;
}

TEST(SampleToken, FullTopKFollowsTemperatureDistribution) {
  const std::vector<double> logits{0.2, -0.5, 1.1, 0.4};
  const double tau = 0.8;
  std::vector<double> probs(4);
  double z = 0.0;
  for (std::size_t i = 0; i < 4; ++i) z += probs[i] = std::exp(logits[i] / tau);
  for (auto& p : probs) p /= z;

  const int n = 10000;
  std::vector<int> topk(4, 0), temp(4, 0);
  std::mt19937_64 rng_a(77), rng_b(77);
  for (int i = 0; i < n; ++i) {
    const auto a = sample_token(logits, {DecodeStrategy::TopK, tau, 4}, rng_a);
    const auto b = sample_token(logits, {DecodeStrategy::Temperature, tau, 0}, rng_b);
    EXPECT_EQ(a, b);
    ++topk[static_cast<std::size_t>(a)];
    ++temp[static_cast<std::size_t>(b)];
  }
  // 99th percentile of χ² with 3 degrees of freedom.
  EXPECT_LT(chi_square(topk, probs, n), 11.345);
  EXPECT_LT(chi_square(temp, probs, n), 11.345);
}

TEST(SampleToken, TopKNeverDrawsOutsideTheTopK) {
  const std::vector<double> logits{0.0, 3.0, -1.0, 2.0, 1.0};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto t = sample_token(logits, {DecodeStrategy::TopK, 2.0, 2}, rng);
    EXPECT_TRUE(t == 1 || t == 3) << t;
  }
}

}  // namespace
}  // namespace mudaif
