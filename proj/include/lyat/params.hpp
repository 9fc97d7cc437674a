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

// Architecture hyperparameters and the flat parameter vector.
//
// All weights live in one contiguous vector. The nine groups appear in the
// order multi-head output, query, key, value, encoder FF in/out, decoder FF
// in/out, output head. Inside the attention groups the attention kind is the
// outermost index, then the layer, then the head. Every matrix is stored
// column-major, so an Eigen::Map over its slice is the matrix itself.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lyat/errors.hpp"
#include "lyat/hash.hpp"

namespace lyat {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct NormConstants {
  double gamma = 1.0;
  double beta = 0.0;
};

// LayerNorm constants of one encoder/decoder layer pair.
struct LayerNorms {
  NormConstants self_attn;    // after encoder self-attention
  NormConstants masked_attn;  // after decoder masked self-attention
  NormConstants cross_attn;   // after decoder cross-attention
  NormConstants enc_ff;       // after encoder feedforward
  NormConstants dec_ff;       // after decoder feedforward
};

// Which of the three attention mechanisms a block implements.
enum class Attn : int { Self = 0, Masked = 1, Cross = 2 };

inline constexpr std::array<Attn, 3> kAllAttn = {Attn::Self, Attn::Masked,
                                                 Attn::Cross};

inline const char* attn_name(Attn a) {
  switch (a) {
    case Attn::Self: return "self";
    case Attn::Masked: return "masked";
    case Attn::Cross: return "cross";
  }
  return "?";
}

struct ArchConfig {
  int n = 6;        // state dimension
  int m = 6;        // control dimension
  int s = 6;        // Wiener dimension
  int tau = 20;     // window length
  int layers = 1;   // N
  int heads = 3;    // H
  int d_ff = 5;     // feedforward hidden size
  std::vector<LayerNorms> norms = {LayerNorms{}};  // one entry per layer
  double theta_bar = 10.0;
  double init_gain = 0.01;
  double ln_epsilon = 1e-8;

  Index enc_len() const { return Index{3} * n * tau; }
  Index dec_len() const { return Index{n} * tau; }
  Index dk_enc() const { return 3 * n / heads; }
  Index dk_dec() const { return n / heads; }
  Index dk(Attn a) const { return a == Attn::Self ? dk_enc() : dk_dec(); }

  const LayerNorms& norms_at(int layer) const { return norms.at(layer); }

  void validate() const {
    auto positive = [](int v, const char* key) {
      if (v < 1) throw ConfigError("must be a positive integer", key);
    };
    positive(n, "arch.n");
    positive(m, "arch.m");
    positive(s, "arch.s");
    positive(tau, "arch.tau");
    positive(layers, "arch.N");
    positive(heads, "arch.H");
    positive(d_ff, "arch.d_f");
    if (m < n) throw ConfigError("m must be >= n for a right pseudo-inverse", "arch.m");
    if ((3 * n) % heads != 0 || n % heads != 0)
      throw ConfigError("3n and n must both be divisible by H (n=" +
                            std::to_string(n) + ", H=" + std::to_string(heads) + ")",
                        "arch.H");
    if (static_cast<int>(norms.size()) != layers)
      throw ConfigError("need one LayerNorm constant set per layer", "arch.layer_norm");
    for (const auto& ln : norms) {
      for (const NormConstants* c : {&ln.self_attn, &ln.masked_attn, &ln.cross_attn,
                                     &ln.enc_ff, &ln.dec_ff}) {
        if (!(c->gamma > 0.0)) throw ConfigError("gamma must be > 0", "arch.layer_norm");
        if (!std::isfinite(c->beta)) throw ConfigError("beta must be finite", "arch.layer_norm");
      }
    }
    if (!(theta_bar > 0.0)) throw ConfigError("must be > 0", "arch.theta_bar");
    if (!(init_gain >= 0.0)) throw ConfigError("must be >= 0", "arch.init_gain");
    if (!(ln_epsilon > 0.0)) throw ConfigError("must be > 0", "arch.ln_epsilon");
  }

  // Stable across runs and platforms; covers every field that changes the
  // meaning of a parameter vector.
  std::uint64_t hash() const {
    std::ostringstream os;
    os.precision(17);
    os << n << ',' << m << ',' << s << ',' << tau << ',' << layers << ',' << heads
       << ',' << d_ff << ',' << theta_bar << ',' << init_gain << ',' << ln_epsilon;
    for (const auto& ln : norms)
      for (const NormConstants* c : {&ln.self_attn, &ln.masked_attn, &ln.cross_attn,
                                     &ln.enc_ff, &ln.dec_ff})
        os << ';' << c->gamma << ',' << c->beta;
    return fnv1a64(os.str());
  }
};

// The nine parameter groups, in storage order.
enum class Group : int {
  MultiHead = 0,  // per-mechanism output projection
  Query,
  Key,
  Value,
  EncFF1,
  EncFF2,
  DecFF1,
  DecFF2,
  Output,
};

inline constexpr int kNumGroups = 9;

inline const char* group_name(Group g) {
  static constexpr const char* names[] = {"multihead", "query", "key",   "value",  "enc_ff1",
                                          "enc_ff2",   "dec_ff1", "dec_ff2", "output"};
  return names[static_cast<int>(g)];
}

struct Dims {
  Index p = 0;
  std::array<Index, kNumGroups> group_sizes{};
};

// Closed-form sizes; `ThetaLayout` derives the same numbers from the
// individual matrix shapes.
inline Dims dim_of(const ArchConfig& c) {
  c.validate();
  const Index n = c.n, t = c.tau, N = c.layers, df = c.d_ff;
  Dims d;
  d.group_sizes = {11 * N * n * n * t, 11 * N * n * n * t, 13 * N * n * n * t,
                   13 * N * n * n * t, 3 * N * n * t * df, 3 * N * n * t * df,
                   N * n * t * df,     N * n * t * df,     n * n * t};
  d.p = 48 * N * n * n * t + 8 * N * n * t * df + n * n * t;
  return d;
}

// Location of one weight matrix inside the flat vector.
struct Block {
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

class ThetaLayout {
 public:
  ThetaLayout() = default;

  explicit ThetaLayout(const ArchConfig& c)
      : n_(c.n), tau_(c.tau), layers_(c.layers), heads_(c.heads), d_ff_(c.d_ff) {
    c.validate();
    Index off = 0;
    for (int g = 0; g < kNumGroups; ++g) {
      group_offset_[g] = off;
      for_each_in_group(static_cast<Group>(g), [&](Attn a, int layer, int head) {
        off += shape(static_cast<Group>(g), a).size();
        (void)layer;
        (void)head;
      });
      group_size_[g] = off - group_offset_[g];
    }
    p_ = off;
  }

  Index p() const { return p_; }
  int layers() const { return layers_; }
  int heads() const { return heads_; }
  Index group_offset(Group g) const { return group_offset_[static_cast<int>(g)]; }
  Index group_size(Group g) const { return group_size_[static_cast<int>(g)]; }

  static bool is_attention(Group g) {
    return g == Group::MultiHead || g == Group::Query || g == Group::Key || g == Group::Value;
  }
  static bool has_heads(Group g) {
    return g == Group::Query || g == Group::Key || g == Group::Value;
  }

  // Matrix shape of one block. `a` is ignored for non-attention groups.
  Block shape(Group g, Attn a = Attn::Self) const {
    const Index enc = Index{3} * n_ * tau_, dec = Index{n_} * tau_;
    const Index dke = 3 * n_ / heads_, dkd = n_ / heads_;
    const bool self = a == Attn::Self;
    switch (g) {
      case Group::MultiHead:
        return self ? Block{0, 3 * n_, enc} : Block{0, n_, dec};
      case Group::Query:
        return self ? Block{0, enc, dke} : Block{0, dec, dkd};
      case Group::Key:
      case Group::Value:
        if (self) return Block{0, enc, dke};
        return a == Attn::Masked ? Block{0, dec, dkd} : Block{0, enc, dkd};
      case Group::EncFF1: return Block{0, enc, d_ff_};
      case Group::EncFF2: return Block{0, d_ff_, enc};
      case Group::DecFF1: return Block{0, dec, d_ff_};
      case Group::DecFF2: return Block{0, d_ff_, dec};
      case Group::Output: return Block{0, dec, n_};
    }
    return {};
  }

  // Full location of a block. Layer and head are 0-based; the head is only
  // meaningful for query/key/value, the attention kind only for the four
  // attention groups, the layer for everything but the output head.
  Block locate(Group g, Attn a = Attn::Self, int layer = 0, int head = 0) const {
    if (layer < 0 || (g != Group::Output && layer >= layers_) ||
        (g == Group::Output && layer != 0))
      throw ShapeError(std::string("layer index out of range for ") + group_name(g));
    if (head < 0 || (has_heads(g) && head >= heads_) || (!has_heads(g) && head != 0))
      throw ShapeError(std::string("head index out of range for ") + group_name(g));
    if (!is_attention(g) && a != Attn::Self)
      throw ShapeError(std::string("attention kind not applicable to ") + group_name(g));
    Index off = group_offset(g);
    bool found = false;
    Block out;
    for_each_in_group(g, [&](Attn aa, int ll, int hh) {
      const Block b = shape(g, aa);
      if (!found && aa == a && ll == layer && hh == head) {
        out = Block{off, b.rows, b.cols};
        found = true;
      }
      off += b.size();
    });
    return out;
  }

  // Visits every block of a group in storage order.
  template <typename Fn>
  void for_each_in_group(Group g, Fn&& fn) const {
    if (is_attention(g)) {
      const int nh = has_heads(g) ? heads_ : 1;
      for (Attn a : kAllAttn)
        for (int l = 0; l < layers_; ++l)
          for (int h = 0; h < nh; ++h) fn(a, l, h);
    } else if (g == Group::Output) {
      fn(Attn::Self, 0, 0);
    } else {
      for (int l = 0; l < layers_; ++l) fn(Attn::Self, l, 0);
    }
  }

  // Visits every block of every group in storage order with its location.
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    for (int gi = 0; gi < kNumGroups; ++gi) {
      const Group g = static_cast<Group>(gi);
      Index off = group_offset(g);
      for_each_in_group(g, [&](Attn a, int l, int h) {
        Block b = shape(g, a);
        b.offset = off;
        fn(g, a, l, h, b);
        off += b.size();
      });
    }
  }

 private:
  int n_ = 0, tau_ = 0, layers_ = 0, heads_ = 0, d_ff_ = 0;
  Index p_ = 0;
  std::array<Index, kNumGroups> group_offset_{};
  std::array<Index, kNumGroups> group_size_{};
};

// Flat parameter vector plus the layout that gives it meaning.
class ThetaVector {
 public:
  ThetaVector() = default;
  explicit ThetaVector(const ArchConfig& c) : layout_(c), data_(Vec::Zero(layout_.p())) {}
  ThetaVector(const ArchConfig& c, Vec data) : layout_(c), data_(std::move(data)) {
    if (data_.size() != layout_.p())
      throw ShapeError("parameter vector has length " + std::to_string(data_.size()) +
                       ", layout needs " + std::to_string(layout_.p()));
  }

  const ThetaLayout& layout() const { return layout_; }
  Index size() const { return data_.size(); }
  Vec& data() { return data_; }
  const Vec& data() const { return data_; }
  double norm() const { return data_.norm(); }

  Eigen::Map<Mat> view(Group g, Attn a = Attn::Self, int layer = 0, int head = 0) {
    const Block b = layout_.locate(g, a, layer, head);
    return Eigen::Map<Mat>(data_.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const Mat> view(Group g, Attn a = Attn::Self, int layer = 0,
                             int head = 0) const {
    const Block b = layout_.locate(g, a, layer, head);
    return Eigen::Map<const Mat>(data_.data() + b.offset, b.rows, b.cols);
  }

 private:
  ThetaLayout layout_;
  Vec data_;
};

// Xavier-uniform fill of every matrix (bound from that matrix's own fan-in
// plus fan-out), then a uniform rescale onto the theta_bar ball if needed.
inline ThetaVector init_theta(const ArchConfig& c, double gain, std::uint64_t seed) {
  ThetaVector theta(c);
  std::mt19937_64 rng(seed);
  Vec& d = theta.data();
  theta.layout().for_each_block([&](Group, Attn, int, int, const Block& b) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    if (bound <= 0.0) return;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < b.size(); ++i) d[b.offset + i] = dist(rng);
  });
  const double norm = d.norm();
  if (norm > c.theta_bar) d *= c.theta_bar / norm;
  return theta;
}

// Checkpoint: little-endian u64 architecture hash, then p little-endian
// IEEE-754 doubles.
namespace detail {
inline void put_le64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline bool get_le64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return true;
}
}  // namespace detail

inline void save_theta(std::ostream& os, const ArchConfig& c, const ThetaVector& theta) {
  detail::put_le64(os, c.hash());
  for (Index i = 0; i < theta.size(); ++i)
    detail::put_le64(os, std::bit_cast<std::uint64_t>(theta.data()[i]));
}

inline ThetaVector load_theta(std::istream& is, const ArchConfig& c) {
  std::uint64_t h = 0;
  if (!detail::get_le64(is, h)) throw ConfigError("truncated checkpoint header", "checkpoint");
  if (h != c.hash())
    throw ConfigError("checkpoint was written for a different architecture (hash " +
                          to_hex(h) + ", expected " + to_hex(c.hash()) + ")",
                      "checkpoint");
  ThetaVector theta(c);
  for (Index i = 0; i < theta.size(); ++i) {
    std::uint64_t bits = 0;
    if (!detail::get_le64(is, bits))
      throw ConfigError("truncated checkpoint body", "checkpoint");
    theta.data()[i] = std::bit_cast<double>(bits);
  }
  char extra;
  if (is.read(&extra, 1)) throw ConfigError("trailing bytes in checkpoint", "checkpoint");
  return theta;
}

}  // namespace lyat
