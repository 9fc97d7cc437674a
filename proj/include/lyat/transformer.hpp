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

// Forward pass of the adaptive encoder-decoder transformer.
//
// Attention operates on flattened vectors: the query source C and key/value
// source A are single long vectors, each head projects them to d_k-vectors,
// and the score matrix is the d_k x d_k outer product Q K^T / sqrt(d_k).
// Residual adds and LayerNorm act on the whole flattened vector.

#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lyat/errors.hpp"
#include "lyat/params.hpp"

namespace lyat {

// ---------------------------------------------------------------------------
// Inputs

struct PosEncoding {
  Vec enc;  // length 3*n*tau
  Vec dec;  // length n*tau
};

namespace detail {
inline Vec sinusoid_stack(int positions, int features) {
  Vec out(Index{positions} * features);
  for (int pos = 0; pos < positions; ++pos) {
    for (int d = 0; d < features; ++d) {
      const double expo = 2.0 * static_cast<double>(d / 2) / static_cast<double>(features);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      out[Index{pos} * features + d] = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}
}  // namespace detail

inline PosEncoding positional_encoding(const ArchConfig& c) {
  return PosEncoding{detail::sinusoid_stack(c.tau, 3 * c.n), detail::sinusoid_stack(c.tau, c.n)};
}

// Sliding windows fed to the encoder (stacked [x; x_d; e], oldest first) and
// the decoder (last tau outputs, oldest first). Unfilled slots keep whatever
// padding they were created with.
struct WindowState {
  Vec zeta_enc;
  Vec phi_hist;
  int enc_fill = 0;
  int dec_fill = 0;

  WindowState() = default;
  explicit WindowState(const ArchConfig& c)
      : zeta_enc(Vec::Zero(c.enc_len())), phi_hist(Vec::Zero(c.dec_len())) {}

  int tau(int n) const { return static_cast<int>(phi_hist.size() / n); }

  void push_sample(const Vec& x, const Vec& x_d) {
    const Index n = x.size();
    if (x_d.size() != n || zeta_enc.size() % (3 * n) != 0)
      throw ShapeError("push_sample: sample does not match window width");
    const Index slot = 3 * n;
    const Index len = zeta_enc.size();
    zeta_enc.head(len - slot) = zeta_enc.tail(len - slot).eval();
    zeta_enc.segment(len - slot, n) = x;
    zeta_enc.segment(len - slot + n, n) = x_d;
    zeta_enc.segment(len - slot + 2 * n, n) = x - x_d;
    enc_fill = std::min<int>(enc_fill + 1, static_cast<int>(len / slot));
  }

  void push_output(const Vec& phi) {
    const Index n = phi.size();
    if (phi_hist.size() % n != 0) throw ShapeError("push_output: width mismatch");
    const Index len = phi_hist.size();
    phi_hist.head(len - n) = phi_hist.tail(len - n).eval();
    phi_hist.tail(n) = phi;
    dec_fill = std::min<int>(dec_fill + 1, static_cast<int>(len / n));
  }
};

// ---------------------------------------------------------------------------
// Primitives

struct NormStats {
  double mean = 0.0;
  double sigma = 0.0;  // population standard deviation before flooring
  double denom = 1.0;  // max(sigma, eps)
  bool floored = false;
};

inline Vec layer_norm(const Vec& z, double gamma, double beta, double eps,
                      NormStats* stats = nullptr, Vec* normalized = nullptr) {
  if (z.size() < 1) throw ShapeError("layer_norm: empty input");
  const double k = static_cast<double>(z.size());
  const double mu = z.sum() / k;
  const Vec centered = z.array() - mu;
  const double sigma = std::sqrt(centered.squaredNorm() / k);
  const bool floored = !(sigma > eps);
  const double denom = floored ? eps : sigma;
  Vec xhat = centered / denom;
  if (stats) *stats = NormStats{mu, sigma, denom, floored};
  Vec out = (gamma * xhat).array() + beta;
  if (normalized) *normalized = std::move(xhat);
  return out;
}

inline Mat build_mask(Index d) {
  if (d < 1) throw ShapeError("build_mask: dimension must be >= 1");
  Mat m = Mat::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) m(i, j) = -std::numeric_limits<double>::infinity();
  return m;
}

inline Mat softmax_rows(const Mat& s) {
  Mat out(s.rows(), s.cols());
  for (Index i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
    if (!(mx > -std::numeric_limits<double>::infinity()))
      throw NumericError("softmax row is entirely masked", "row " + std::to_string(i));
    double sum = 0.0;
    for (Index j = 0; j < s.cols(); ++j) {
      const double v = std::exp(s(i, j) - mx);  // exp(-inf) == 0 exactly
      out(i, j) = v;
      sum += v;
    }
    out.row(i) /= sum;
  }
  return out;
}

inline Vec relu(const Vec& v) { return v.cwiseMax(0.0); }

// ---------------------------------------------------------------------------
// Tape

struct HeadTape {
  Vec q, k, v;
  Mat scores;  // before softmax, mask included
  Mat probs;   // after softmax
  Vec out;     // probs * v
};

struct AttnTape {
  Attn kind = Attn::Self;
  Vec c, a;  // query source, key/value source
  std::vector<HeadTape> heads;
  Vec concat;   // [H_1; ...; H_H]
  Vec r_prime;  // multi-head output
  NormStats stats;
  Vec xhat;
  Vec out;  // R
};

struct FeedForwardTape {
  Vec input;       // R
  Vec hidden_pre;  // W1^T R
  Vec hidden;      // ReLU(hidden_pre)
  Vec b_prime;     // W2^T hidden
  NormStats stats;
  Vec xhat;
  Vec out;  // Psi or Upsilon
};

struct EncoderTape {
  AttnTape self;
  FeedForwardTape ff;
};

struct DecoderTape {
  AttnTape masked;
  AttnTape cross;
  FeedForwardTape ff;
};

struct ForwardTape {
  Vec enc_input;  // zeta_enc + PE
  Vec dec_input;  // phi_hist + PE
  std::vector<EncoderTape> encoder;
  std::vector<DecoderTape> decoder;
  Vec relu_out;  // ReLU(Upsilon^(N))
  Vec phi;
};

// ---------------------------------------------------------------------------
// Blocks

namespace detail {
inline void require_finite(const Vec& v, const std::string& where) {
  if (!v.allFinite()) throw NumericError("non-finite intermediate", where);
}
inline const NormConstants& attn_norm(const LayerNorms& ln, Attn a) {
  switch (a) {
    case Attn::Self: return ln.self_attn;
    case Attn::Masked: return ln.masked_attn;
    case Attn::Cross: return ln.cross_attn;
  }
  return ln.self_attn;
}
inline std::string attn_where(int layer, Attn a) {
  return std::string(a == Attn::Self ? "encoder[" : "decoder[") + std::to_string(layer) +
         "]." + attn_name(a) + "_attention";
}
}  // namespace detail

// One attention mechanism of one layer; returns R.
inline Vec attention_block(const Vec& c, const Vec& a, const ThetaVector& theta, int layer,
                           Attn kind, const ArchConfig& cfg, AttnTape* tape = nullptr) {
  const Index enc = cfg.enc_len(), dec = cfg.dec_len();
  const Index want_c = kind == Attn::Self ? enc : dec;
  const Index want_a = kind == Attn::Masked ? dec : enc;
  if (c.size() != want_c || a.size() != want_a)
    throw ShapeError(std::string("attention_block(") + attn_name(kind) + "): got C=" +
                     std::to_string(c.size()) + ", A=" + std::to_string(a.size()) +
                     ", expected C=" + std::to_string(want_c) +
                     ", A=" + std::to_string(want_a));

  const Index dk = cfg.dk(kind);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::string where = detail::attn_where(layer, kind);
  Mat mask;
  if (kind == Attn::Masked) mask = build_mask(dk);

  Vec concat(dk * cfg.heads);
  if (tape) {
    tape->kind = kind;
    tape->c = c;
    tape->a = a;
    tape->heads.assign(cfg.heads, HeadTape{});
  }
  for (int h = 0; h < cfg.heads; ++h) {
    Vec q = theta.view(Group::Query, kind, layer, h).transpose() * c;
    Vec k = theta.view(Group::Key, kind, layer, h).transpose() * a;
    Vec v = theta.view(Group::Value, kind, layer, h).transpose() * a;
    Mat scores = (q * k.transpose()) * scale;
    if (kind == Attn::Masked) scores += mask;
    Mat probs = softmax_rows(scores);
    Vec out = probs * v;
    detail::require_finite(out, where + ".head[" + std::to_string(h) + "]");
    concat.segment(h * dk, dk) = out;
    if (tape) {
      HeadTape& ht = tape->heads[h];
      ht.q = std::move(q);
      ht.k = std::move(k);
      ht.v = std::move(v);
      ht.scores = std::move(scores);
      ht.probs = std::move(probs);
      ht.out = std::move(out);
    }
  }
  Vec r_prime = theta.view(Group::MultiHead, kind, layer).transpose() * concat;
  const NormConstants& nc = detail::attn_norm(cfg.norms_at(layer), kind);
  NormStats stats;
  Vec xhat;
  Vec r = layer_norm(c + r_prime, nc.gamma, nc.beta, cfg.ln_epsilon, &stats, &xhat);
  detail::require_finite(r, where);
  if (tape) {
    tape->concat = std::move(concat);
    tape->r_prime = std::move(r_prime);
    tape->stats = stats;
    tape->xhat = std::move(xhat);
    tape->out = r;
  }
  return r;
}

namespace detail {
// Position-wise feedforward with residual LayerNorm. `encoder` picks the
// weight pair and norm constants.
inline Vec feedforward_block(const Vec& r, const ThetaVector& theta, int layer, bool encoder,
                             const ArchConfig& cfg, FeedForwardTape* tape) {
  const auto w1 = theta.view(encoder ? Group::EncFF1 : Group::DecFF1, Attn::Self, layer);
  const auto w2 = theta.view(encoder ? Group::EncFF2 : Group::DecFF2, Attn::Self, layer);
  Vec pre = w1.transpose() * r;
  Vec hidden = relu(pre);
  Vec b_prime = w2.transpose() * hidden;
  const LayerNorms& ln = cfg.norms_at(layer);
  const NormConstants& nc = encoder ? ln.enc_ff : ln.dec_ff;
  NormStats stats;
  Vec xhat;
  Vec out = layer_norm(r + b_prime, nc.gamma, nc.beta, cfg.ln_epsilon, &stats, &xhat);
  require_finite(out, std::string(encoder ? "encoder[" : "decoder[") + std::to_string(layer) +
                          "].feedforward");
  if (tape) {
    tape->input = r;
    tape->hidden_pre = std::move(pre);
    tape->hidden = std::move(hidden);
    tape->b_prime = std::move(b_prime);
    tape->stats = stats;
    tape->xhat = std::move(xhat);
    tape->out = out;
  }
  return out;
}
}  // namespace detail

// Self-attention followed by the feedforward sub-layer; returns Psi.
inline Vec encoder_layer(const Vec& input, const ThetaVector& theta, int layer,
                         const ArchConfig& cfg, EncoderTape* tape = nullptr) {
  Vec r = attention_block(input, input, theta, layer, Attn::Self, cfg,
                          tape ? &tape->self : nullptr);
  return detail::feedforward_block(r, theta, layer, true, cfg, tape ? &tape->ff : nullptr);
}

// Masked self-attention, cross-attention onto the encoder output, then the
// feedforward sub-layer; returns Upsilon.
inline Vec decoder_layer(const Vec& dec_input, const Vec& enc_output, const ThetaVector& theta,
                         int layer, const ArchConfig& cfg, DecoderTape* tape = nullptr) {
  Vec r2 = attention_block(dec_input, dec_input, theta, layer, Attn::Masked, cfg,
                           tape ? &tape->masked : nullptr);
  Vec r3 = attention_block(r2, enc_output, theta, layer, Attn::Cross, cfg,
                           tape ? &tape->cross : nullptr);
  return detail::feedforward_block(r3, theta, layer, false, cfg, tape ? &tape->ff : nullptr);
}

// Phi(zeta_enc, theta). Layer k > 0 of each stack consumes the previous
// layer's output; every decoder layer cross-attends to the last encoder layer.
inline Vec forward(const WindowState& window, const ThetaVector& theta, const PosEncoding& pe,
                   const ArchConfig& cfg, ForwardTape* tape = nullptr) {
  if (window.zeta_enc.size() != cfg.enc_len() || window.phi_hist.size() != cfg.dec_len())
    throw ShapeError("forward: window does not match architecture");
  if (theta.size() != dim_of(cfg).p) throw ShapeError("forward: theta has wrong length");

  Vec enc = window.zeta_enc + pe.enc;
  Vec dec = window.phi_hist + pe.dec;
  if (tape) {
    tape->enc_input = enc;
    tape->dec_input = dec;
    tape->encoder.assign(cfg.layers, EncoderTape{});
    tape->decoder.assign(cfg.layers, DecoderTape{});
  }
  detail::require_finite(enc, "encoder input");
  detail::require_finite(dec, "decoder input");

  for (int l = 0; l < cfg.layers; ++l)
    enc = encoder_layer(enc, theta, l, cfg, tape ? &tape->encoder[l] : nullptr);
  for (int l = 0; l < cfg.layers; ++l)
    dec = decoder_layer(dec, enc, theta, l, cfg, tape ? &tape->decoder[l] : nullptr);

  Vec act = relu(dec);
  Vec phi = theta.view(Group::Output).transpose() * act;
  detail::require_finite(phi, "output head");
  if (tape) {
    tape->relu_out = std::move(act);
    tape->phi = phi;
  }
  return phi;
}

// ReLU masks and LayerNorm floor flags of a tape, in a fixed order. Two tapes
// with equal signatures lie on the same smooth piece of the forward map.
inline std::vector<char> activation_signature(const ForwardTape& tape) {
  std::vector<char> sig;
  auto add_mask = [&](const Vec& pre) {
    for (Index i = 0; i < pre.size(); ++i) sig.push_back(pre[i] > 0.0 ? 1 : 0);
  };
  auto add_floor = [&](const NormStats& s) { sig.push_back(s.floored ? 2 : 3); };
  for (const auto& e : tape.encoder) {
    add_floor(e.self.stats);
    add_mask(e.ff.hidden_pre);
    add_floor(e.ff.stats);
  }
  for (const auto& d : tape.decoder) {
    add_floor(d.masked.stats);
    add_floor(d.cross.stats);
    add_mask(d.ff.hidden_pre);
    add_floor(d.ff.stats);
  }
  add_mask(tape.decoder.empty() ? Vec() : tape.decoder.back().ff.out);
  return sig;
}

}  // namespace lyat
