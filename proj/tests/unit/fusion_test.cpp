// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "../oracles/finite_diff.hpp"
#include "../oracles/oracles.hpp"
#include "mudaif/errors.hpp"
#include "mudaif/fusion.hpp"
#include "mudaif/ops.hpp"

namespace mudaif {
namespace {

using oracle::Mat;

CoAttentionParams make_params(std::size_t d, std::mt19937_64& rng) {
  ModelConfig c;
  c.d_model = d;
  c.n_heads = 1;
  return CoAttentionParams::init(c, rng);
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

TEST(CoAttention, SingleRowsGiveUnitWeights) {
  std::mt19937_64 rng(1);
  const auto p = make_params(3, rng);
  const auto w = co_attention_weights(oracle::tensor(oracle::random_mat(1, 3, rng)),
                                      oracle::tensor(oracle::random_mat(1, 3, rng)), p);
  EXPECT_EQ(w.visual_to_text.at(0, 0), 1.0);
  EXPECT_EQ(w.text_to_visual.at(0, 0), 1.0);
}

TEST(CoAttention, ZeroQueriesGiveUniformWeights) {
  std::mt19937_64 rng(2);
  auto p = make_params(4, rng);
  zero(p.w_query_visual);
  zero(p.w_query_text);
  const auto w = co_attention_weights(oracle::tensor(oracle::random_mat(3, 4, rng)),
                                      oracle::tensor(oracle::random_mat(5, 4, rng)), p);
  for (double v : w.visual_to_text.data()) EXPECT_NEAR(v, 1.0 / 5, 1e-15);
  for (double v : w.text_to_visual.data()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(CoAttention, MatchesExpNormalizeLoops) {
  std::mt19937_64 rng(3);
  const auto p = make_params(4, rng);
  const Mat v = oracle::random_mat(3, 4, rng), t = oracle::random_mat(4, 4, rng);
  const auto w = co_attention_weights(oracle::tensor(v), oracle::tensor(t), p);
  const auto vt = oracle::attention(oracle::matmul(v, oracle::of(p.w_query_visual)),
                                    oracle::matmul(t, oracle::of(p.w_key_text)), t);
  const auto tv = oracle::attention(oracle::matmul(t, oracle::of(p.w_query_text)),
                                    oracle::matmul(v, oracle::of(p.w_key_visual)), v);
  ASSERT_EQ(w.visual_to_text.shape(), (Shape{3, 4}));
  ASSERT_EQ(w.text_to_visual.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < vt.weights.v.size(); ++i)
    EXPECT_NEAR(w.visual_to_text.data()[i], vt.weights.v[i], 1e-12);
  for (std::size_t i = 0; i < tv.weights.v.size(); ++i)
    EXPECT_NEAR(w.text_to_visual.data()[i], tv.weights.v[i], 1e-12);
}

TEST(CoAttention, WidthMismatchIsAShapeError) {
  std::mt19937_64 rng(4);
  const auto p = make_params(4, rng);
  EXPECT_THROW(co_attention_weights(Tensor::zeros({2, 4}), Tensor::zeros({2, 3}), p), ShapeError);
}

TEST(CoAttention, RowsAreStochastic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = make_params(5, rng);
    const auto w = co_attention_weights(oracle::tensor(oracle::random_mat(1 + trial % 4, 5, rng, 3.0)),
                                        oracle::tensor(oracle::random_mat(2 + trial % 3, 5, rng, 3.0)), p);
    for (const Tensor* m : {&w.visual_to_text, &w.text_to_visual})
      for (std::size_t i = 0; i < m->rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m->cols(); ++j) s += m->at(i, j);
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(Fuse, StrictSumOfSingleRowsAddsThem) {
  Tensor one = Tensor::matrix({{1.0}});
  Tensor t = Tensor::matrix({{0.5, -1.0}}), v = Tensor::matrix({{2.0, 3.0}});
  const auto z = fuse(one, one, t, v, FusionMode::StrictSum);
  EXPECT_EQ(z.matrix.at(0, 0), 2.5);
  EXPECT_EQ(z.matrix.at(0, 1), 2.0);
}

TEST(Fuse, UniformWeightsGiveSumOfMeans) {
  std::mt19937_64 rng(6);
  const Mat t = oracle::random_mat(3, 2, rng), v = oracle::random_mat(3, 2, rng);
  Tensor u = Tensor::full({3, 3}, 1.0 / 3);
  const auto z = fuse(u, u, oracle::tensor(t), oracle::tensor(v), FusionMode::StrictSum);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double expect = 0.0;
      for (std::size_t k = 0; k < 3; ++k) expect += (t.at(k, j) + v.at(k, j)) / 3.0;
      EXPECT_NEAR(z.matrix.at(i, j), expect, 1e-12);
    }
}

TEST(Fuse, StrictSumEqualsRowAlignedConcatBlocks) {
  std::mt19937_64 rng(7);
  const auto p = make_params(3, rng);
  const Mat v = oracle::random_mat(2, 3, rng), t = oracle::random_mat(2, 3, rng);
  const auto w = co_attention_weights(oracle::tensor(v), oracle::tensor(t), p);
  const auto strict = fuse(w.visual_to_text, w.text_to_visual, oracle::tensor(t), oracle::tensor(v),
                           FusionMode::StrictSum);
  const auto cat = fuse(w.visual_to_text, w.text_to_visual, oracle::tensor(t), oracle::tensor(v),
                        FusionMode::Concat);
  ASSERT_EQ(cat.matrix.rows(), 4u);
  const Mat ref = oracle::add(oracle::matmul(oracle::of(w.visual_to_text), t),
                              oracle::matmul(oracle::of(w.text_to_visual), v));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(strict.matrix.at(i, j), cat.matrix.at(i, j) + cat.matrix.at(i + 2, j), 1e-12);
      EXPECT_NEAR(strict.matrix.at(i, j), ref.at(i, j), 1e-12);
    }
}

TEST(Fuse, StrictSumRejectsUnequalLengths) {
  Tensor a_vt = Tensor::full({2, 3}, 1.0 / 3), a_tv = Tensor::full({3, 2}, 0.5);
  try {
    fuse(a_vt, a_tv, Tensor::zeros({3, 4}), Tensor::zeros({2, 4}), FusionMode::StrictSum);
    FAIL() << "expected ModeError";
  } catch (const ModeError& e) {
    EXPECT_NE(std::string(e.what()).find("N == L"), std::string::npos) << e.what();
  }
}

TEST(Fuse, ConcatRecordsProvenance) {
  Tensor a_vt = Tensor::full({2, 3}, 1.0 / 3), a_tv = Tensor::full({3, 2}, 0.5);
  const auto z = fuse(a_vt, a_tv, Tensor::zeros({3, 4}), Tensor::zeros({2, 4}), FusionMode::Concat);
  ASSERT_EQ(z.matrix.rows(), 5u);
  const std::vector<Stream> expect{Stream::Visual, Stream::Visual, Stream::Text, Stream::Text,
                                   Stream::Text};
  EXPECT_EQ(z.provenance, expect);
}

TEST(Fuse, AttendedRowsStayInsideValueEnvelope) {
  std::mt19937_64 rng(8);
  const auto p = make_params(4, rng);
  const Mat v = oracle::random_mat(3, 4, rng), t = oracle::random_mat(5, 4, rng);
  const auto w = co_attention_weights(oracle::tensor(v), oracle::tensor(t), p);
  const auto z = fuse(w.visual_to_text, w.text_to_visual, oracle::tensor(t), oracle::tensor(v),
                      FusionMode::Concat);
  auto check = [&](const Mat& src, std::size_t first, std::size_t count) {
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t k = 0; k < src.r; ++k) {
        lo = std::min(lo, src.at(k, j));
        hi = std::max(hi, src.at(k, j));
      }
      for (std::size_t i = first; i < first + count; ++i) {
        EXPECT_GE(z.matrix.at(i, j), lo - 1e-12);
        EXPECT_LE(z.matrix.at(i, j), hi + 1e-12);
      }
    }
  };
  check(t, 0, 3);
  check(v, 3, 5);
}

TEST(Fuse, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const auto p = make_params(3, rng);
  for (FusionMode mode : {FusionMode::StrictSum, FusionMode::Concat}) {
    const double err = oracle::fd_max_rel_error(
        {oracle::tensor(oracle::random_mat(2, 3, rng)), oracle::tensor(oracle::random_mat(2, 3, rng)),
         p.w_query_visual.detach(), p.w_key_text.detach(), p.w_query_text.detach(),
         p.w_key_visual.detach()},
        [&](const auto& in) {
          const CoAttentionParams q{in[2], in[5], in[4], in[3]};
          const auto w = co_attention_weights(in[0], in[1], q);
          return fuse(w.visual_to_text, w.text_to_visual, in[1], in[0], mode).matrix;
        });
    EXPECT_LT(err, 1e-6);
  }
}

}  // namespace
}  // namespace mudaif
