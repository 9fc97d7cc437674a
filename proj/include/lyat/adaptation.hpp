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

// Real-time weight update: theta_dot = proj(Gamma Phi'^T e - Gamma sigma theta)
// with a ball-constraint projection, integrated by explicit Euler.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

#include "lyat/errors.hpp"
#include "lyat/jacobian.hpp"
#include "lyat/params.hpp"

namespace lyat {

struct AdaptConfig {
  // Scalar g means Gamma = g * I_p.
  std::variant<double, Mat> gamma = 0.02;
  double sigma = 1e-6;
  double theta_bar = 10.0;
  double proj_band = 0.5;  // epsilon_p, 0 < proj_band < theta_bar

  // Absolute slack allowed on ||theta|| <= theta_bar before the projection
  // treats the state as corrupt.
  static constexpr double kBoundSlack = 1e-9;

  bool scalar_gain() const { return std::holds_alternative<double>(gamma); }

  void validate(Index p = -1) const {
    if (!(theta_bar > 0.0)) throw ConfigError("must be > 0", "adapt.theta_bar");
    if (!(proj_band > 0.0 && proj_band < theta_bar))
      throw ConfigError("must satisfy 0 < proj_band < theta_bar", "adapt.proj_band");
    if (!(sigma >= 0.0)) throw ConfigError("must be >= 0", "adapt.sigma");
    if (const double* g = std::get_if<double>(&gamma)) {
      if (!(*g > 0.0)) throw ConfigError("must be > 0", "adapt.gamma");
    } else {
      const Mat& m = std::get<Mat>(gamma);
      if (m.rows() != m.cols() || (p >= 0 && m.rows() != p))
        throw ConfigError("gain matrix must be p x p", "adapt.gamma");
      if (!m.isApprox(m.transpose(), 1e-12))
        throw ConfigError("gain matrix must be symmetric", "adapt.gamma");
      Eigen::LLT<Mat> llt(m);
      if (llt.info() != Eigen::Success)
        throw ConfigError("gain matrix must be positive definite", "adapt.gamma");
    }
  }

  Vec apply_gain(const Vec& v) const {
    if (const double* g = std::get_if<double>(&gamma)) return *g * v;
    return std::get<Mat>(gamma) * v;
  }
};

// Blend coefficient in [0, 1]: 0 inside radius theta_bar - band, 1 on the
// boundary, linear in ||theta||^2 between.
inline double projection_blend(double norm_sq, const AdaptConfig& cfg) {
  const double inner = cfg.theta_bar - cfg.proj_band;
  const double lo = inner * inner;
  const double hi = cfg.theta_bar * cfg.theta_bar;
  return std::clamp((norm_sq - lo) / (hi - lo), 0.0, 1.0);
}

inline Vec smooth_projection(const Vec& theta_hat, const Vec& y, const AdaptConfig& cfg) {
  if (theta_hat.size() != y.size()) throw ShapeError("smooth_projection: length mismatch");
  const double norm_sq = theta_hat.squaredNorm();
  const double limit = cfg.theta_bar + AdaptConfig::kBoundSlack;
  if (norm_sq > limit * limit)
    throw NumericError("parameter estimate left the ball (||theta|| = " +
                           std::to_string(std::sqrt(norm_sq)) + ")",
                       "smooth_projection");
  const double inner = cfg.theta_bar - cfg.proj_band;
  if (norm_sq <= inner * inner) return y;
  const double radial = theta_hat.dot(y);
  if (radial <= 0.0) return y;
  const double c = projection_blend(norm_sq, cfg);
  return y - (c * radial / norm_sq) * theta_hat;
}

// Update direction from the fast-path product Phi'^T e.
inline Vec theta_dot(const Vec& jt_e, const Vec& theta_hat, const AdaptConfig& cfg) {
  if (jt_e.size() != theta_hat.size()) throw ShapeError("theta_dot: length mismatch");
  return smooth_projection(theta_hat, cfg.apply_gain(jt_e - cfg.sigma * theta_hat), cfg);
}

inline Vec theta_dot(const JacobianMatrix& jac, const Vec& e, const Vec& theta_hat,
                     const AdaptConfig& cfg) {
  if (jac.data.rows() != e.size()) throw ShapeError("theta_dot: Jacobian rows != len(e)");
  return theta_dot(Vec(jac.data.transpose() * e), theta_hat, cfg);
}

// Explicit Euler step. Returns true when the discretization overshot the
// ball and the estimate was rescaled radially onto it.
inline bool step_theta(Vec& theta_hat, const Vec& dtheta, double dt, const AdaptConfig& cfg) {
  if (!(dt > 0.0)) throw ConfigError("step size must be > 0", "dt");
  if (theta_hat.size() != dtheta.size()) throw ShapeError("step_theta: length mismatch");
  if (!dtheta.allFinite()) throw NumericError("non-finite parameter update", "step_theta");
  theta_hat.noalias() += dt * dtheta;
  const double norm = theta_hat.norm();
  if (norm > cfg.theta_bar) {
    theta_hat *= cfg.theta_bar / norm;
    return true;
  }
  return false;
}

inline bool step_theta(ThetaVector& theta_hat, const Vec& dtheta, double dt,
                       const AdaptConfig& cfg) {
  return step_theta(theta_hat.data(), dtheta, dt, cfg);
}

}  // namespace lyat
