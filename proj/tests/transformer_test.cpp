/* Copyright 2026 The LyAT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lyat/transformer.hpp"
#include "oracle/reference_forward.hpp"
#include "test_support.hpp"

namespace lyat {
namespace {

using testing::tiny_arch;
constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(PositionalEncoding, FirstPositionAlternates) {
  const Vec pe = detail::sinusoid_stack(1, 18);
  for (Index d = 0; d < 18; ++d) EXPECT_EQ(pe[d], d % 2 == 0 ? 0.0 : 1.0);
}

TEST(PositionalEncoding, SecondPosition) {
  const Vec pe = detail::sinusoid_stack(2, 18);
  EXPECT_NEAR(pe[18 + 0], 0.841471, 1e-6);
  EXPECT_NEAR(pe[18 + 1], 0.540302, 1e-6);
  // pair j = 1 uses exponent 2/18
  EXPECT_DOUBLE_EQ(pe[18 + 2], std::sin(1.0 / std::pow(10000.0, 2.0 / 18.0)));
  EXPECT_DOUBLE_EQ(pe[18 + 3], std::cos(1.0 / std::pow(10000.0, 2.0 / 18.0)));
}

TEST(PositionalEncoding, SizesFollowArch) {
  const PosEncoding pe = positional_encoding(ArchConfig{});
  EXPECT_EQ(pe.enc.size(), 360);
  EXPECT_EQ(pe.dec.size(), 120);
}

TEST(LayerNorm, HandExample) {
  const Vec out = layer_norm((Vec(3) << 1, 2, 3).finished(), 1.0, 0.0, 1e-8);
  EXPECT_NEAR(out[0], -1.224745, 1e-6);
  EXPECT_NEAR(out[1], 0.0, 1e-15);
  EXPECT_NEAR(out[2], 1.224745, 1e-6);
}

TEST(LayerNorm, ConstantVectorHitsFloor) {
  NormStats st;
  const Vec out = layer_norm(Vec::Constant(3, 4.2), 1.0, 0.0, 1e-6, &st);
  EXPECT_TRUE(st.floored);
  EXPECT_LE(out.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LayerNorm, AffineContract) {
  const Vec z = (Vec(3) << 1, 2, 3).finished();
  const Vec base = layer_norm(z, 1.0, 0.0, 1e-8);
  const Vec scaled = layer_norm(z, 2.0, 5.0, 1e-8);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(scaled[i], 2.0 * base[i] + 5.0, 1e-14);
}

TEST(Softmax, Cases) {
  Mat s(3, 3);
  s << 0, 0, 0, std::log(2.0), 0, -kInf, 5, -kInf, -kInf;
  const Mat p = softmax_rows(s);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p(0, j), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(p(1, 2), 0.0);
  EXPECT_EQ(p(2, 0), 1.0);
  EXPECT_EQ(p(2, 1), 0.0);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Mat s(1, 2);
  s << 1000.0, 999.0;
  const Mat p = softmax_rows(s);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Softmax, FullyMaskedRowIsError) {
  Mat s(1, 2);
  s << -kInf, -kInf;
  EXPECT_THROW(softmax_rows(s), NumericError);
}

TEST(Mask, Shapes) {
  EXPECT_EQ(build_mask(1), Mat::Zero(1, 1));
  const Mat m = build_mask(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (j > i) EXPECT_EQ(m(i, j), -kInf);
      else EXPECT_EQ(m(i, j), 0.0);
    }
}

class Blocks : public ::testing::Test {
 protected:
  ArchConfig cfg = tiny_arch();
  std::mt19937_64 rng{17};
  ThetaVector theta = init_theta(cfg, 1.0, 4);
  void SetUp() override {
    cfg.norms[0] = LayerNorms{{0.8, 0.1}, {0.7, -0.2}, {0.9, 0.05}, {1.1, 0.0}, {0.6, 0.3}};
  }
};

TEST_F(Blocks, ZeroAttentionWeightsReduceToNorm) {
  theta.view(Group::MultiHead, Attn::Self).setZero();
  const Vec c = testing::gaussian(cfg.enc_len(), rng);
  const Vec r = attention_block(c, c, theta, 0, Attn::Self, cfg);
  const Vec expect = layer_norm(c, 0.8, 0.1, cfg.ln_epsilon);
  EXPECT_LE((r - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(Blocks, AttentionRejectsWrongShapes) {
  const Vec c = testing::gaussian(cfg.enc_len(), rng);
  EXPECT_THROW(attention_block(c, c, theta, 0, Attn::Masked, cfg), ShapeError);
}

TEST_F(Blocks, ZeroFeedforwardReducesToNorm) {
  theta.view(Group::EncFF1).setZero();
  theta.view(Group::EncFF2).setZero();
  const Vec in = testing::gaussian(cfg.enc_len(), rng);
  EncoderTape tape;
  const Vec psi = encoder_layer(in, theta, 0, cfg, &tape);
  const Vec expect = layer_norm(tape.self.out, 1.1, 0.0, cfg.ln_epsilon);
  EXPECT_LE((psi - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(Blocks, DeadReluReducesToNorm) {
  // Every pre-activation negative: force W_f1^T R < 0 by choosing W_f1 = -R * 1^T.
  const Vec in = testing::gaussian(cfg.enc_len(), rng);
  EncoderTape probe;
  encoder_layer(in, theta, 0, cfg, &probe);
  const Vec r = probe.self.out;
  theta.view(Group::EncFF1) = -r * Vec::Ones(cfg.d_ff).transpose();
  EncoderTape tape;
  const Vec psi = encoder_layer(in, theta, 0, cfg, &tape);
  EXPECT_EQ(tape.ff.hidden.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE((psi - layer_norm(r, 1.1, 0.0, cfg.ln_epsilon)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(Blocks, ZeroDecoderWeightsCollapseToNestedNorms) {
  ThetaVector z = theta;
  for (Group g : {Group::MultiHead})
    for (Attn a : {Attn::Masked, Attn::Cross}) z.view(g, a).setZero();
  z.view(Group::DecFF1).setZero();
  z.view(Group::DecFF2).setZero();
  const Vec dec = testing::gaussian(cfg.dec_len(), rng);
  const Vec enc = testing::gaussian(cfg.enc_len(), rng);
  const Vec ups = decoder_layer(dec, enc, z, 0, cfg);
  const Vec expect = layer_norm(
      layer_norm(layer_norm(dec, 0.7, -0.2, cfg.ln_epsilon), 0.9, 0.05, cfg.ln_epsilon), 0.6,
      0.3, cfg.ln_epsilon);
  EXPECT_LE((ups - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(Blocks, ZeroCrossValuesIgnoreEncoder) {
  theta.view(Group::Value, Attn::Cross).setZero();
  const Vec dec = testing::gaussian(cfg.dec_len(), rng);
  DecoderTape a, b;
  decoder_layer(dec, testing::gaussian(cfg.enc_len(), rng), theta, 0, cfg, &a);
  decoder_layer(dec, testing::gaussian(cfg.enc_len(), rng), theta, 0, cfg, &b);
  EXPECT_EQ(a.cross.r_prime.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.cross.out, b.cross.out);
}

TEST_F(Blocks, MaskedAttentionIsCausalInKeys) {
  // Changing only the last key coordinate must leave output row 0 unchanged
  // at the head level: row i only sees keys j <= i.
  const Vec dec = testing::gaussian(cfg.dec_len(), rng);
  AttnTape t;
  attention_block(dec, dec, theta, 0, Attn::Masked, cfg, &t);
  const HeadTape& h = t.heads[0];
  EXPECT_EQ(h.probs(0, 1), 0.0);
  EXPECT_NEAR(h.probs(0, 0), 1.0, 0.0);
  EXPECT_NEAR(h.out[0], h.v[0], 1e-15);
}

TEST_F(Blocks, ZeroOutputHeadGivesZero) {
  theta.view(Group::Output).setZero();
  const WindowState w = testing::random_window(cfg, rng);
  EXPECT_EQ(forward(w, theta, positional_encoding(cfg), cfg), Vec::Zero(cfg.n));
}

TEST_F(Blocks, ForwardIsPure) {
  const WindowState w = testing::random_window(cfg, rng);
  const PosEncoding pe = positional_encoding(cfg);
  ForwardTape tape;
  const Vec a = forward(w, theta, pe, cfg);
  const Vec b = forward(w, theta, pe, cfg, &tape);
  EXPECT_EQ(a, b);
  EXPECT_EQ(tape.phi, a);
}

TEST_F(Blocks, NonFiniteInputIsLocated) {
  WindowState w = testing::random_window(cfg, rng);
  w.zeta_enc[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    forward(w, theta, positional_encoding(cfg), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.where(), "encoder input");
  }
}

TEST(ForwardOracle, MatchesStraightLineImplementation) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 40; ++i) {
    const ArchConfig cfg = testing::random_arch(rng, 500);
    ASSERT_EQ(oracle::layout(cfg).p, static_cast<std::size_t>(dim_of(cfg).p));
    const ThetaVector theta = init_theta(cfg, 1.0, 100 + i);
    const WindowState w = testing::random_window(cfg, rng);
    const Vec phi = forward(w, theta, positional_encoding(cfg), cfg);
    const auto ref = oracle::forward(cfg, testing::to_std(theta.data()),
                                     testing::to_std(w.zeta_enc), testing::to_std(w.phi_hist));
    const Eigen::Map<const Vec> r(ref.data(), static_cast<Index>(ref.size()));
    EXPECT_LE((phi - r).norm(), 1e-12 * std::max(1.0, r.norm())) << "instance " << i;
  }
}

TEST(ForwardOracle, DefaultArchitecture) {
  ArchConfig cfg;
  cfg.norms[0] = LayerNorms{{0.8, 0}, {0.7, 0}, {0.7, 0}, {0.8, 0}, {0.7, 0}};
  std::mt19937_64 rng(5);
  const ThetaVector theta = init_theta(cfg, 1.0, 3);
  const WindowState w = testing::random_window(cfg, rng);
  const Vec phi = forward(w, theta, positional_encoding(cfg), cfg);
  const auto ref = oracle::forward(cfg, testing::to_std(theta.data()),
                                   testing::to_std(w.zeta_enc), testing::to_std(w.phi_hist));
  const Eigen::Map<const Vec> r(ref.data(), static_cast<Index>(ref.size()));
  EXPECT_LE((phi - r).norm(), 1e-12 * std::max(1.0, r.norm()));
}

TEST(Window, PushKeepsNewestLast) {
  const ArchConfig cfg = tiny_arch();
  WindowState w(cfg);
  w.push_sample((Vec(2) << 1, 2).finished(), (Vec(2) << 0.5, 0.5).finished());
  w.push_sample((Vec(2) << 3, 4).finished(), (Vec(2) << 1, 1).finished());
  const Vec expect = (Vec(12) << 1, 2, 0.5, 0.5, 0.5, 1.5, 3, 4, 1, 1, 2, 3).finished();
  EXPECT_EQ(w.zeta_enc, expect);
  EXPECT_EQ(w.enc_fill, 2);
  w.push_sample((Vec(2) << 5, 6).finished(), (Vec(2) << 0, 0).finished());
  EXPECT_EQ(w.zeta_enc.head(6), expect.tail(6));
  EXPECT_EQ(w.enc_fill, 2);
  w.push_output((Vec(2) << 9, 8).finished());
  EXPECT_EQ(w.phi_hist, (Vec(4) << 0, 0, 9, 8).finished());
}

}  // namespace
}  // namespace lyat
