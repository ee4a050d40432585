// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "../oracles/finite_diff.hpp"
#include "../oracles/oracles.hpp"
#include "mudaif/errors.hpp"
#include "mudaif/vta.hpp"

namespace mudaif {
namespace {

ImageTensor random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> px(h * w * 3);
  for (auto& v : px) v = unit(rng);
  return ImageTensor::from_pixels(h, w, std::move(px));
}

ModelConfig small_config(std::size_t d = 6, std::size_t p = 4) {
  ModelConfig c;
  c.d_model = d;
  c.n_heads = 1;
  c.patch_size = p;
  c.vocab_size = 8;
  c.max_seq_len = 512;
  return c;
}

TEST(ImageTensor, ValidatesShapeAndRange) {
  EXPECT_THROW(ImageTensor(Tensor::zeros({4, 4})), ShapeError);
  EXPECT_THROW(ImageTensor(Tensor::zeros({4, 4, 2})), ShapeError);
  EXPECT_THROW(ImageTensor::from_pixels(1, 1, {0.5, 1.5, 0.0}), Error);
  EXPECT_NO_THROW(ImageTensor::from_pixels(1, 1, {0.0, 1.0, 0.5}));
}

TEST(PadToPatchGrid, AlignedImageIsUnchanged) {
  std::mt19937_64 rng(1);
  const auto img = random_image(32, 32, rng);
  const auto out = pad_to_patch_grid(img, 16);
  EXPECT_EQ(out.tensor().node(), img.tensor().node());
}

TEST(PadToPatchGrid, PadsRightAndBottomWithZeros) {
  std::mt19937_64 rng(2);
  const auto img = random_image(33, 31, rng);
  const auto out = pad_to_patch_grid(img, 16);
  EXPECT_EQ(out.height(), 48u);
  EXPECT_EQ(out.width(), 32u);
  const auto src = img.tensor().data(), dst = out.tensor().data();
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double expect = (y < 33 && x < 31) ? src[(y * 31 + x) * 3 + c] : 0.0;
        EXPECT_EQ(dst[(y * 32 + x) * 3 + c], expect);
      }
}

TEST(PadToPatchGrid, ExtentsAreSmallestMultiples) {
  for (std::size_t p : {4u, 8u, 16u})
    for (std::size_t h = 1; h <= 40; ++h)
      for (std::size_t w = 1; w <= 40; ++w) {
        const auto img = ImageTensor::from_pixels(h, w, std::vector<double>(h * w * 3, 0.5));
        const auto out = pad_to_patch_grid(img, p);
        EXPECT_EQ(out.height() % p, 0u);
        EXPECT_EQ(out.width() % p, 0u);
        EXPECT_GE(out.height(), h);
        EXPECT_LT(out.height() - h, p);
        EXPECT_GE(out.width(), w);
        EXPECT_LT(out.width() - w, p);
      }
}

TEST(VtaEmbed, TokenCountFollowsPatchGrid) {
  auto c = small_config(6, 16);
  std::mt19937_64 rng(3);
  const auto params = VtaParams::init(c, rng);
  const auto t = vta_embed(random_image(32, 32, rng), params, c);
  EXPECT_EQ(t.count(), 4u);
  EXPECT_EQ(t.width(), 6u);
}

TEST(VtaEmbed, ZeroImageAndBiasesGiveZeroTokens) {
  auto c = small_config();
  c.patch_positions = false;
  std::mt19937_64 rng(4);
  const auto params = VtaParams::init(c, rng);
  const auto t = vta_embed(ImageTensor(Tensor::zeros({8, 12, 3})), params, c);
  EXPECT_EQ(t.count(), 6u);
  for (double v : t.tokens.data()) EXPECT_EQ(v, 0.0);
}

TEST(VtaEmbed, MatchesConvThenProjectionOracle) {
  auto c = small_config(6, 16);
  std::mt19937_64 rng(5);
  auto params = VtaParams::init(c, rng);
  for (auto& v : params.conv_bias.mutable_data()) v = 0.1;
  for (auto& v : params.proj_bias.mutable_data()) v = -0.2;
  const auto img = random_image(32, 32, rng);
  const auto t = vta_embed(img, params, c);
  const auto conv = oracle::conv_patches(img.tensor().data(), 32, 32, 3, params.kernel.data(), 16,
                                         c.conv_width(), params.conv_bias.data());
  auto ref = oracle::add_row(oracle::matmul(conv, oracle::of(params.proj)), params.proj_bias.data());
  const auto rp = oracle::of(params.row_pos), cp = oracle::of(params.col_pos);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double expect = ref.at(i, j) + rp.at(i / 2, j) + cp.at(i % 2, j);
      EXPECT_NEAR(t.tokens.at(i, j), expect, 1e-12);
    }
}

TEST(VtaEmbed, WidthMismatchIsAConfigError) {
  auto c = small_config(6);
  std::mt19937_64 rng(6);
  const auto params = VtaParams::init(c, rng);
  auto other = c;
  other.d_model = 8;
  EXPECT_THROW(vta_embed(random_image(8, 8, rng), params, other), ConfigError);
}

TEST(VtaEmbed, SucceedsForEveryResolution) {
  for (std::size_t p : {4u, 8u, 16u}) {
    auto c = small_config(4, p);
    std::mt19937_64 rng(p);
    const auto params = VtaParams::init(c, rng);
    for (std::size_t h = 1; h <= 64; h += 3)
      for (std::size_t w = 1; w <= 64; w += 5) {
        const auto img = ImageTensor::from_pixels(h, w, std::vector<double>(h * w * 3, 0.25));
        const auto t = vta_embed(img, params, c);
        EXPECT_EQ(t.count(), ((h + p - 1) / p) * ((w + p - 1) / p));
      }
  }
}

TEST(VtaEmbed, PermutingPatchesPermutesTokens) {
  auto c = small_config(5, 4);
  c.patch_positions = false;
  std::mt19937_64 rng(7);
  const auto params = VtaParams::init(c, rng);
  const auto img = random_image(8, 8, rng);
  // Swap patch (0,0) with patch (1,1).
  std::vector<double> px(img.tensor().data().begin(), img.tensor().data().end());
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch)
        std::swap(px[(y * 8 + x) * 3 + ch], px[((y + 4) * 8 + x + 4) * 3 + ch]);
  const auto a = vta_embed(img, params, c).tokens;
  const auto b = vta_embed(ImageTensor::from_pixels(8, 8, px), params, c).tokens;
  const std::size_t perm[4] = {3, 1, 2, 0};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(b.at(i, j), a.at(perm[i], j));
}

TEST(VtaRefine, SingleTokenReturnsValueProjection) {
  auto c = small_config(4, 4);
  std::mt19937_64 rng(8);
  const auto params = VtaParams::init(c, rng);
  const auto t = vta_embed(random_image(4, 4, rng), params, c);
  const auto r = vta_refine(t, params, c);
  const auto ref = oracle::matmul(oracle::of(t.tokens), oracle::of(params.w_value));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.tokens.at(0, j), ref.at(0, j), 1e-15);
}

TEST(VtaRefine, ZeroQueryGivesMeanOfValues) {
  auto c = small_config(4, 4);
  std::mt19937_64 rng(9);
  auto params = VtaParams::init(c, rng);
  for (auto& v : params.w_query.mutable_data()) v = 0.0;
  const auto t = vta_embed(random_image(12, 8, rng), params, c);
  const auto r = vta_refine(t, params, c);
  const auto vals = oracle::matmul(oracle::of(t.tokens), oracle::of(params.w_value));
  for (std::size_t i = 0; i < r.tokens.rows(); ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0.0;
      for (std::size_t k = 0; k < vals.r; ++k) mean += vals.at(k, j) / static_cast<double>(vals.r);
      EXPECT_NEAR(r.tokens.at(i, j), mean, 1e-12);
    }
}

TEST(VtaRefine, MatchesExplicitAttentionLoops) {
  auto c = small_config(6, 4);
  std::mt19937_64 rng(10);
  const auto params = VtaParams::init(c, rng);
  const auto t = vta_embed(random_image(4, 20, rng), params, c);
  ASSERT_EQ(t.count(), 5u);
  const auto x = oracle::of(t.tokens);
  const auto ref = oracle::attention(oracle::matmul(x, oracle::of(params.w_query)),
                                     oracle::matmul(x, oracle::of(params.w_key)),
                                     oracle::matmul(x, oracle::of(params.w_value)));
  const auto r = vta_refine(t, params, c);
  for (std::size_t i = 0; i < ref.output.v.size(); ++i)
    EXPECT_NEAR(r.tokens.data()[i], ref.output.v[i], 1e-9);
}

TEST(VtaRefine, OutputsStayInsideValueEnvelope) {
  auto c = small_config(6, 4);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto params = VtaParams::init(c, rng);
    const auto t = vta_embed(random_image(12, 12, rng), params, c);
    const auto vals = oracle::matmul(oracle::of(t.tokens), oracle::of(params.w_value));
    const auto r = vta_refine(t, params, c);
    for (std::size_t j = 0; j < 6; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t k = 0; k < vals.r; ++k) {
        lo = std::min(lo, vals.at(k, j));
        hi = std::max(hi, vals.at(k, j));
      }
      for (std::size_t i = 0; i < r.tokens.rows(); ++i) {
        EXPECT_GE(r.tokens.at(i, j), lo - 1e-12);
        EXPECT_LE(r.tokens.at(i, j), hi + 1e-12);
      }
    }
  }
}

TEST(VtaRefine, ResidualAndMultiHeadVariants) {
  auto c = small_config(6, 4);
  c.vta_heads = 2;
  c.vta_residual = true;
  std::mt19937_64 rng(12);
  const auto params = VtaParams::init(c, rng);
  const auto t = vta_embed(random_image(8, 8, rng), params, c);
  std::vector<Tensor> maps;
  const auto r = vta_refine(t, params, c, &maps);
  ASSERT_EQ(maps.size(), 2u);
  const auto x = oracle::of(t.tokens);
  const auto mh = oracle::multi_head(oracle::matmul(x, oracle::of(params.w_query)),
                                     oracle::matmul(x, oracle::of(params.w_key)),
                                     oracle::matmul(x, oracle::of(params.w_value)), 2);
  const auto ref = oracle::add(mh, x);
  for (std::size_t i = 0; i < ref.v.size(); ++i) EXPECT_NEAR(r.tokens.data()[i], ref.v[i], 1e-12);
}

TEST(Vta, PixelGradientMatchesFiniteDifferences) {
  auto c = small_config(4, 4);
  std::mt19937_64 rng(13);
  const auto params = VtaParams::init(c, rng);
  const auto img = random_image(6, 7, rng);
  const double err = oracle::fd_max_rel_error({img.tensor().detach()}, [&](const auto& in) {
    const ImageTensor image(in[0], ImageTensor::ShapeOnly{});
    return vta_refine(vta_embed(image, params, c), params, c).tokens;
  });
  EXPECT_LT(err, 1e-4);
}

}  // namespace
}  // namespace mudaif
