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

#pragma once

#include <Eigen/Dense>

#include <algorithm>

#include "lyat/errors.hpp"
#include "lyat/params.hpp"

namespace lyat {

struct ControlConfig {
  double k_e = 0.8;
  double vel_max = 1.8;
  bool saturate = true;

  void validate() const {
    if (!(k_e > 0.0)) throw ConfigError("must be > 0", "ctrl.k_e");
    if (!(vel_max > 0.0)) throw ConfigError("must be > 0", "ctrl.vel_max");
  }
};

inline constexpr double kRankTolerance = 1e-10;

// g1^T (g1 g1^T)^{-1} for full-row-rank g1.
inline Mat pinv_right(const Mat& g1) {
  if (g1.rows() > g1.cols())
    throw ControlError("pinv_right: g1 is " + std::to_string(g1.rows()) + "x" +
                       std::to_string(g1.cols()) + ", cannot have full row rank");
  const Mat gram = g1 * g1.transpose();
  // gram is symmetric PSD, so its eigenvalues are its singular values.
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > kRankTolerance))
    throw ControlError("pinv_right: g1 g1^T is singular (rank deficient g1)");
  return g1.transpose() * gram.ldlt().solve(Mat::Identity(g1.rows(), g1.rows()));
}

struct ControlOutput {
  Vec u;        // command actually applied
  Vec u_raw;    // before saturation
  int clamped;  // number of clamped components
};

// u = g1^+ (xd_dot - k_e e - phi), optionally clamped to +-vel_max, with the
// pseudo-inverse supplied by the caller.
inline ControlOutput control_from_pinv(const Vec& x, const Vec& x_d, const Vec& xd_dot,
                                       const Vec& phi, const Mat& g1_pinv,
                                       const ControlConfig& cfg) {
  const Index n = x.size();
  if (x_d.size() != n || xd_dot.size() != n || phi.size() != n || g1_pinv.cols() != n)
    throw ShapeError("control_law: dimension mismatch");
  const Vec e = x - x_d;
  ControlOutput out;
  out.u_raw = g1_pinv * (xd_dot - cfg.k_e * e - phi);
  out.u = out.u_raw;
  out.clamped = 0;
  if (cfg.saturate) {
    for (Index i = 0; i < out.u.size(); ++i) {
      const double c = std::clamp(out.u[i], -cfg.vel_max, cfg.vel_max);
      if (c != out.u[i]) ++out.clamped;
      out.u[i] = c;
    }
  }
  return out;
}

inline ControlOutput control_law(const Vec& x, const Vec& x_d, const Vec& xd_dot,
                                 const Vec& phi, const Mat& g1, const ControlConfig& cfg) {
  return control_from_pinv(x, x_d, xd_dot, phi, pinv_right(g1), cfg);
}

// Keeps the pseudo-inverse of a constant g1, or recomputes it per call.
class PinvCache {
 public:
  explicit PinvCache(bool constant) : constant_(constant) {}

  const Mat& get(const Mat& g1) {
    if (!constant_ || !valid_) {
      pinv_ = pinv_right(g1);
      valid_ = true;
    }
    return pinv_;
  }

 private:
  bool constant_;
  bool valid_ = false;
  Mat pinv_;
};

}  // namespace lyat
