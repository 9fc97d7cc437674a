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

#include <random>
#include <sstream>

#include "lyat/params.hpp"
#include "test_support.hpp"

namespace lyat {
namespace {

using testing::tiny_arch;

Index closed_form(const ArchConfig& c) {
  const Index n = c.n, t = c.tau, N = c.layers, df = c.d_ff;
  return 48 * N * n * n * t + 8 * N * n * t * df + n * n * t;
}

TEST(Dims, DefaultConfig) {
  ArchConfig c;
  EXPECT_EQ(dim_of(c).p, 40080);
  EXPECT_EQ(ThetaLayout(c).p(), 40080);
}

TEST(Dims, TinyConfig) { EXPECT_EQ(dim_of(tiny_arch()).p, 488); }

TEST(Dims, GroupsSumToTotal) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const ArchConfig c = testing::random_arch(rng, 1 << 20);
    const Dims d = dim_of(c);
    Index sum = 0;
    for (Index g : d.group_sizes) sum += g;
    EXPECT_EQ(sum, d.p);
    EXPECT_EQ(d.p, closed_form(c));
    Index blocks = 0;
    ThetaLayout(c).for_each_block([&](Group, Attn, int, int, const Block& b) { blocks += b.size(); });
    EXPECT_EQ(blocks, d.p);
  }
}

TEST(Dims, HeadsMustDivide) {
  ArchConfig c;
  c.heads = 4;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key_path(), "arch.H");
  }
}

TEST(Layout, BlocksAreContiguousAndOrdered) {
  const ThetaLayout lay(tiny_arch());
  Index expect = 0;
  int last_group = -1;
  lay.for_each_block([&](Group g, Attn, int, int, const Block& b) {
    EXPECT_EQ(b.offset, expect);
    EXPECT_GE(static_cast<int>(g), last_group);
    last_group = static_cast<int>(g);
    expect += b.size();
  });
  EXPECT_EQ(expect, lay.p());
}

TEST(Layout, ViewShapes) {
  ThetaVector th(tiny_arch());
  EXPECT_EQ(th.view(Group::Output).rows(), 4);
  EXPECT_EQ(th.view(Group::Output).cols(), 2);
  EXPECT_EQ(th.view(Group::Key, Attn::Cross).rows(), 12);
  EXPECT_EQ(th.view(Group::Key, Attn::Cross).cols(), 2);
  EXPECT_EQ(th.view(Group::MultiHead, Attn::Self).rows(), 6);
  EXPECT_EQ(th.view(Group::MultiHead, Attn::Self).cols(), 12);
  EXPECT_THROW(th.view(Group::Query, Attn::Self, 0, 1), ShapeError);
  EXPECT_THROW(th.view(Group::EncFF1, Attn::Self, 1), ShapeError);
}

TEST(Layout, ViewIsColumnMajorAlias) {
  ThetaVector th(tiny_arch());
  const Block b = th.layout().locate(Group::Output);
  th.view(Group::Output)(1, 0) = 5.0;
  th.view(Group::Output)(0, 1) = 7.0;
  EXPECT_EQ(th.data()[b.offset + 1], 5.0);
  EXPECT_EQ(th.data()[b.offset + b.rows], 7.0);
}

TEST(Layout, PackUnpackRoundTrip) {
  const ArchConfig c = tiny_arch();
  ThetaVector a = init_theta(c, 1.0, 11);
  ThetaVector b(c);
  a.layout().for_each_block([&](Group g, Attn at, int l, int h, const Block&) {
    b.view(g, at, l, h) = a.view(g, at, l, h);
  });
  EXPECT_EQ(a.data(), b.data());
}

TEST(Init, ZeroGainGivesZeros) {
  const ThetaVector th = init_theta(ArchConfig{}, 0.0, 1);
  EXPECT_EQ(th.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Init, DeterministicPerSeed) {
  ArchConfig c;
  EXPECT_EQ(init_theta(c, 0.01, 5).data(), init_theta(c, 0.01, 5).data());
  EXPECT_NE(init_theta(c, 0.01, 5).data(), init_theta(c, 0.01, 6).data());
}

TEST(Init, EntriesWithinXavierBound) {
  const ArchConfig c = tiny_arch();
  const ThetaVector th = init_theta(c, 0.01, 2);
  EXPECT_LE(th.view(Group::Output).cwiseAbs().maxCoeff(), 0.01);
  th.layout().for_each_block([&](Group g, Attn a, int l, int h, const Block& b) {
    const double bound = 0.01 * std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    EXPECT_LE(th.view(g, a, l, h).cwiseAbs().maxCoeff(), bound);
  });
}

TEST(Init, RescaledIntoBall) {
  ArchConfig c;
  c.theta_bar = 1.0;
  EXPECT_NEAR(init_theta(c, 1.0, 0).norm(), 1.0, 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
  const ArchConfig c = tiny_arch();
  const ThetaVector th = init_theta(c, 1.0, 9);
  std::stringstream ss;
  save_theta(ss, c, th);
  EXPECT_EQ(ss.str().size(), 8u + 8u * 488u);
  EXPECT_EQ(load_theta(ss, c).data(), th.data());
}

TEST(Checkpoint, RejectsOtherArchitecture) {
  const ArchConfig c = tiny_arch();
  std::stringstream ss;
  save_theta(ss, c, init_theta(c, 1.0, 9));
  ArchConfig other = c;
  other.d_ff = 4;
  EXPECT_THROW(load_theta(ss, other), ConfigError);
}

TEST(Checkpoint, RejectsTruncationAndTrailingBytes) {
  const ArchConfig c = tiny_arch();
  std::stringstream ss;
  save_theta(ss, c, init_theta(c, 1.0, 9));
  const std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_theta(cut, c), ConfigError);
  std::stringstream extra(bytes + "x");
  EXPECT_THROW(load_theta(extra, c), ConfigError);
}

}  // namespace
}  // namespace lyat
