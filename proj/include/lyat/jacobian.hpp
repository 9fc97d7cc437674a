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

// Derivative of the transformer output with respect to the flat parameter
// vector, by reverse accumulation over a ForwardTape. The decoder history is
// a constant input: nothing is differentiated through earlier outputs.

#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "lyat/errors.hpp"
#include "lyat/params.hpp"
#include "lyat/transformer.hpp"

namespace lyat {

// n x p, columns in ThetaVector order.
struct JacobianMatrix {
  Mat data;
};

namespace detail {

class GradientSink {
 public:
  GradientSink(Vec& grad, const ThetaLayout& layout) : grad_(grad), layout_(layout) {}

  Eigen::Map<Mat> block(Group g, Attn a = Attn::Self, int layer = 0, int head = 0) {
    const Block b = layout_.locate(g, a, layer, head);
    return Eigen::Map<Mat>(grad_.data() + b.offset, b.rows, b.cols);
  }

 private:
  Vec& grad_;
  const ThetaLayout& layout_;
};

// d(LayerNorm)/d(input) applied to an upstream gradient. With the floor
// active the denominator is the constant eps.
inline Vec layer_norm_backward(const Vec& dy, const NormStats& stats, const Vec& xhat,
                               double gamma) {
  const double k = static_cast<double>(dy.size());
  const double mean_dy = dy.sum() / k;
  if (stats.floored) return (gamma / stats.denom) * (dy.array() - mean_dy).matrix();
  const double mean_dy_xhat = dy.dot(xhat) / k;
  return (gamma / stats.denom) * (dy.array() - mean_dy - xhat.array() * mean_dy_xhat).matrix();
}

// Returns (dC, dA) and accumulates weight gradients of the block.
inline std::pair<Vec, Vec> attention_backward(const AttnTape& t, const Vec& d_out,
                                              const ThetaVector& theta, int layer,
                                              const ArchConfig& cfg, GradientSink& sink) {
  const Attn kind = t.kind;
  const Index dk = cfg.dk(kind);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const NormConstants& nc = attn_norm(cfg.norms_at(layer), kind);

  const Vec dv = layer_norm_backward(d_out, t.stats, t.xhat, nc.gamma);
  Vec dc = dv;
  Vec da = Vec::Zero(t.a.size());

  const auto w_mh = theta.view(Group::MultiHead, kind, layer);
  sink.block(Group::MultiHead, kind, layer).noalias() += t.concat * dv.transpose();
  const Vec dconcat = w_mh * dv;

  for (int h = 0; h < cfg.heads; ++h) {
    const HeadTape& ht = t.heads[h];
    const Vec dh = dconcat.segment(h * dk, dk);
    const Mat dprobs = dh * ht.v.transpose();
    const Vec dval = ht.probs.transpose() * dh;
    Mat dscores(dk, dk);
    for (Index i = 0; i < dk; ++i) {
      const double inner = dprobs.row(i).dot(ht.probs.row(i));
      dscores.row(i) = ht.probs.row(i).array() * (dprobs.row(i).array() - inner);
    }
    const Vec dq = scale * (dscores * ht.k);
    const Vec dkey = scale * (dscores.transpose() * ht.q);

    sink.block(Group::Query, kind, layer, h).noalias() += t.c * dq.transpose();
    sink.block(Group::Key, kind, layer, h).noalias() += t.a * dkey.transpose();
    sink.block(Group::Value, kind, layer, h).noalias() += t.a * dval.transpose();
    dc.noalias() += theta.view(Group::Query, kind, layer, h) * dq;
    da.noalias() += theta.view(Group::Key, kind, layer, h) * dkey;
    da.noalias() += theta.view(Group::Value, kind, layer, h) * dval;
  }
  return {std::move(dc), std::move(da)};
}

// Returns d(input R).
inline Vec feedforward_backward(const FeedForwardTape& t, const Vec& d_out,
                                const ThetaVector& theta, int layer, bool encoder,
                                const ArchConfig& cfg, GradientSink& sink) {
  const LayerNorms& ln = cfg.norms_at(layer);
  const NormConstants& nc = encoder ? ln.enc_ff : ln.dec_ff;
  const Group g1 = encoder ? Group::EncFF1 : Group::DecFF1;
  const Group g2 = encoder ? Group::EncFF2 : Group::DecFF2;

  const Vec dv = layer_norm_backward(d_out, t.stats, t.xhat, nc.gamma);
  Vec dr = dv;
  sink.block(g2, Attn::Self, layer).noalias() += t.hidden * dv.transpose();
  Vec dhidden = theta.view(g2, Attn::Self, layer) * dv;
  for (Index i = 0; i < dhidden.size(); ++i)
    if (!(t.hidden_pre[i] > 0.0)) dhidden[i] = 0.0;
  sink.block(g1, Attn::Self, layer).noalias() += t.input * dhidden.transpose();
  dr.noalias() += theta.view(g1, Attn::Self, layer) * dhidden;
  return dr;
}

}  // namespace detail

// Vector-Jacobian product: returns Phi'^T * upstream (length p) without
// materializing Phi'. `tape` must come from forward() on the same theta.
inline Vec vjp(const ForwardTape& tape, const ThetaVector& theta, const ArchConfig& cfg,
               const Vec& upstream) {
  if (upstream.size() != cfg.n) throw ShapeError("vjp: upstream must have length n");
  if (static_cast<int>(tape.decoder.size()) != cfg.layers ||
      static_cast<int>(tape.encoder.size()) != cfg.layers)
    throw ShapeError("vjp: tape does not match architecture");

  Vec grad = Vec::Zero(theta.size());
  detail::GradientSink sink(grad, theta.layout());

  const auto w_o = theta.view(Group::Output);
  sink.block(Group::Output).noalias() += tape.relu_out * upstream.transpose();
  Vec d_dec = w_o * upstream;
  const Vec& upsilon = tape.decoder.back().ff.out;
  for (Index i = 0; i < d_dec.size(); ++i)
    if (!(upsilon[i] > 0.0)) d_dec[i] = 0.0;

  Vec d_enc_top = Vec::Zero(cfg.enc_len());
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const DecoderTape& dt = tape.decoder[l];
    const Vec d_r3 = detail::feedforward_backward(dt.ff, d_dec, theta, l, false, cfg, sink);
    auto [d_r2, d_psi] = detail::attention_backward(dt.cross, d_r3, theta, l, cfg, sink);
    d_enc_top += d_psi;
    auto [dc, da] = detail::attention_backward(dt.masked, d_r2, theta, l, cfg, sink);
    d_dec = dc + da;
  }

  Vec d_enc = std::move(d_enc_top);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const EncoderTape& et = tape.encoder[l];
    const Vec d_r1 = detail::feedforward_backward(et.ff, d_enc, theta, l, true, cfg, sink);
    auto [dc, da] = detail::attention_backward(et.self, d_r1, theta, l, cfg, sink);
    d_enc = dc + da;
  }

  if (!grad.allFinite()) throw NumericError("non-finite parameter gradient", "vjp");
  return grad;
}

// Convenience: forward + vjp.
inline Vec jacobian_transpose_times(const WindowState& window, const ThetaVector& theta,
                                    const PosEncoding& pe, const ArchConfig& cfg,
                                    const Vec& e) {
  ForwardTape tape;
  forward(window, theta, pe, cfg, &tape);
  return vjp(tape, theta, cfg, e);
}

inline JacobianMatrix jacobian(const WindowState& window, const ThetaVector& theta,
                               const PosEncoding& pe, const ArchConfig& cfg) {
  ForwardTape tape;
  forward(window, theta, pe, cfg, &tape);
  JacobianMatrix j{Mat(cfg.n, theta.size())};
  for (int k = 0; k < cfg.n; ++k)
    j.data.row(k) = vjp(tape, theta, cfg, Vec::Unit(cfg.n, k)).transpose();
  return j;
}

// Central-difference Jacobian. `flagged[k]` marks coordinates whose +-10h
// neighbourhood changes a ReLU mask or touches a LayerNorm floor; the
// analytic and numeric derivatives need not agree there.
struct FdJacobian {
  Mat data;
  std::vector<bool> flagged;
  Index flagged_count = 0;
};

inline FdJacobian fd_jacobian(const WindowState& window, const ThetaVector& theta,
                              const PosEncoding& pe, const ArchConfig& cfg, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be > 0", "h");
  FdJacobian out{Mat(cfg.n, theta.size()), std::vector<bool>(theta.size(), false), 0};

  ForwardTape base_tape;
  forward(window, theta, pe, cfg, &base_tape);
  const std::vector<char> base_sig = activation_signature(base_tape);
  const bool base_floored =
      std::find(base_sig.begin(), base_sig.end(), char{2}) != base_sig.end();

  ThetaVector probe = theta;
  ForwardTape tape;
  for (Index k = 0; k < theta.size(); ++k) {
    const double orig = theta.data()[k];
    probe.data()[k] = orig + h;
    const Vec plus = forward(window, probe, pe, cfg);
    probe.data()[k] = orig - h;
    const Vec minus = forward(window, probe, pe, cfg);
    out.data.col(k) = (plus - minus) / (2.0 * h);

    bool flag = base_floored;
    for (double step : {10.0 * h, -10.0 * h}) {
      if (flag) break;
      probe.data()[k] = orig + step;
      forward(window, probe, pe, cfg, &tape);
      flag = activation_signature(tape) != base_sig;
    }
    probe.data()[k] = orig;
    if (flag) {
      out.flagged[k] = true;
      ++out.flagged_count;
    }
  }
  return out;
}

// Column-wise agreement between an analytic and a finite-difference
// Jacobian over the unflagged coordinates. The relative error of column k is
// ||J_k - F_k|| / max(||J_k||, ||F_k||, floor).
struct JacobianComparison {
  double max_rel_error = 0.0;
  Index worst_column = -1;
  Index compared = 0;
  Index excluded = 0;
};

inline JacobianComparison compare_jacobians(const JacobianMatrix& analytic, const FdJacobian& fd,
                                            double floor = 1e-4) {
  if (analytic.data.rows() != fd.data.rows() || analytic.data.cols() != fd.data.cols())
    throw ShapeError("compare_jacobians: shape mismatch");
  JacobianComparison out;
  for (Index k = 0; k < analytic.data.cols(); ++k) {
    if (fd.flagged[k]) {
      ++out.excluded;
      continue;
    }
    const double a = analytic.data.col(k).norm(), b = fd.data.col(k).norm();
    const double rel =
        (analytic.data.col(k) - fd.data.col(k)).norm() / std::max({a, b, floor});
    ++out.compared;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_column = k;
    }
  }
  return out;
}

}  // namespace lyat
