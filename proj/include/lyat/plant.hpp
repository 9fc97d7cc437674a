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

// Ground-truth stochastic plant dx = (f(x) + g1(x) u) dt + g2(x) Sigma(t) dw,
// the figure-8 reference, and Euler-Maruyama stepping.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>

#include "lyat/errors.hpp"
#include "lyat/params.hpp"

namespace lyat {

struct PlantModel {
  std::string name;
  int n = 0, m = 0, s = 0;
  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> g1;
  std::function<Mat(const Vec&)> g2;
  std::function<Mat(double)> sigma;
  bool g1_constant = false;
  // When > 0 the first `position_dims` state components are positions and
  // tracking metrics use only those.
  int position_dims = 0;
};

// ---------------------------------------------------------------------------
// Built-in plants. All are integrator chains with g1 = I (velocity commands
// act directly on every state component).

struct PlantParams {
  int n = 6;
  int s = 6;
  double drift_scale = 0.4;      // sup-norm of each drift component
  double diffusion_scale = 0.05;
  double sigma_w = 1.0;          // Sigma(t) = sigma_w * I_s
};

namespace detail {
// Bounded cross-coupled drift: component i saturates in the state component
// half a period away, with a fixed per-component offset.
inline std::function<Vec(const Vec&)> tanh_drift(int n, double scale) {
  return [n, scale](const Vec& x) {
    static constexpr double offsets[] = {0.5, -0.3, 0.2, -0.4, 0.3, -0.2};
    Vec out(n);
    for (int i = 0; i < n; ++i) {
      const int j = (i + n / 2) % n;
      out[i] = scale * std::tanh(0.5 * x[j] + offsets[i % 6]);
    }
    return out;
  };
}

inline void fill_common(PlantModel& pm, const PlantParams& pp) {
  pm.n = pp.n;
  pm.m = pp.n;
  pm.s = pp.s;
  pm.f = tanh_drift(pp.n, pp.drift_scale);
  pm.g1 = [n = pp.n](const Vec&) { return Mat::Identity(n, n); };
  pm.g1_constant = true;
  pm.sigma = [s = pp.s, w = pp.sigma_w](double) { return Mat(w * Mat::Identity(s, s)); };
  pm.position_dims = pp.n == 6 ? 3 : 0;
}
}  // namespace detail

// Drift plus state-dependent diagonal-dominant diffusion.
inline PlantModel matched_integrator(const PlantParams& pp = {}) {
  PlantModel pm;
  pm.name = "matched_integrator";
  detail::fill_common(pm, pp);
  pm.g2 = [n = pp.n, s = pp.s, c = pp.diffusion_scale](const Vec& x) {
    Mat g = Mat::Zero(n, s);
    for (int i = 0; i < std::min(n, s); ++i) g(i, i) = c * (1.0 + 0.5 * std::tanh(x[i]));
    return g;
  };
  return pm;
}

// g2 == 0. With drift_scale = 0 the plant is a pure integrator.
inline PlantModel zero_noise(const PlantParams& pp = {}) {
  PlantModel pm;
  pm.name = "zero_noise";
  detail::fill_common(pm, pp);
  pm.g2 = [n = pp.n, s = pp.s](const Vec&) { return Mat(Mat::Zero(n, s)); };
  return pm;
}

// vec(g2(x)) = A x + b with fixed A (ns x n) and b, so d vec(g2)/dx = A.
inline Mat linear_diffusion_matrix(int n, int s, double scale) {
  Mat a(Index{n} * s, n);
  for (Index k = 0; k < a.size(); ++k) a.data()[k] = scale * std::sin(1.0 + 0.7 * k);
  return a;
}

inline PlantModel linear_diffusion(const PlantParams& pp = {}) {
  PlantModel pm;
  pm.name = "linear_diffusion";
  detail::fill_common(pm, pp);
  const Mat a = linear_diffusion_matrix(pp.n, pp.s, pp.diffusion_scale);
  Vec b(Index{pp.n} * pp.s);
  for (Index k = 0; k < b.size(); ++k) b[k] = pp.diffusion_scale * std::cos(0.3 * k);
  pm.g2 = [a, b, n = pp.n, s = pp.s](const Vec& x) {
    const Vec v = a * x + b;
    return Mat(Eigen::Map<const Mat>(v.data(), n, s));
  };
  return pm;
}

inline PlantModel make_plant(const std::string& kind, const PlantParams& pp) {
  if (kind == "matched_integrator") return matched_integrator(pp);
  if (kind == "zero_noise") return zero_noise(pp);
  if (kind == "linear_diffusion") return linear_diffusion(pp);
  throw ConfigError("unknown plant model '" + kind + "'", "plant.model");
}

// ---------------------------------------------------------------------------
// Reference

struct ReferenceTrajectory {
  double a = 7.5;
  double b = 3.0;
  double h = 2.5;
  double omega = 0.15;
  // If set, replaces the figure-8: returns (x_d, xd_dot).
  std::function<std::pair<Vec, Vec>(double)> custom;
};

// Figure-8 in the horizontal plane at constant height; state layout
// [px, py, pz, vx, vy, vz].
inline std::pair<Vec, Vec> figure8(double t, const ReferenceTrajectory& ref) {
  if (ref.custom) return ref.custom(t);
  const double w = ref.omega, s1 = std::sin(w * t), c1 = std::cos(w * t);
  const double s2 = std::sin(2.0 * w * t), c2 = std::cos(2.0 * w * t);
  Vec xd(6), xd_dot(6);
  xd << ref.a * s1, ref.b * s2, ref.h, ref.a * w * c1, 2.0 * ref.b * w * c2, 0.0;
  xd_dot << ref.a * w * c1, 2.0 * ref.b * w * c2, 0.0, -ref.a * w * w * s1,
      -4.0 * ref.b * w * w * s2, 0.0;
  return {xd, xd_dot};
}

// ---------------------------------------------------------------------------
// Stochastic stepping

using Rng = std::mt19937_64;

inline Vec wiener_increment(int s, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0", "dt");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = std::sqrt(dt);
  Vec dw(s);
  for (int i = 0; i < s; ++i) dw[i] = sd * gauss(rng);
  return dw;
}

inline Vec em_step(const Vec& x, const Vec& u, double t, double dt, const PlantModel& model,
                   Rng& rng, long long step_index = -1) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0", "dt");
  const Vec dw = wiener_increment(model.s, dt, rng);
  Vec next = x + (model.f(x) + model.g1(x) * u) * dt + model.g2(x) * (model.sigma(t) * dw);
  if (!next.allFinite())
    throw NumericError("non-finite plant state",
                       "physics step " + std::to_string(step_index));
  return next;
}

// ---------------------------------------------------------------------------
// Ground-truth uncertainty (diagnostic only)

// sup over sampled t in [0, horizon] of ||Sigma(t) Sigma(t)^T||_F.
inline double sigma_sup_norm(const PlantModel& model, double horizon, int samples = 1000) {
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = samples > 1 ? horizon * i / (samples - 1) : 0.0;
    const Mat sig = model.sigma(t);
    best = std::max(best, (sig * sig.transpose()).norm());
  }
  return best;
}

inline constexpr double kDiffusionFdStep = 1e-5;

// Central-difference d vec(g2)/dx at `at`, shape (n*s) x n.
inline Mat diffusion_jacobian(const PlantModel& model, const Vec& at,
                              double fd_step = kDiffusionFdStep) {
  const Index n = at.size();
  Mat g(Index{model.n} * model.s, n);
  Vec probe = at;
  for (Index j = 0; j < n; ++j) {
    probe[j] = at[j] + fd_step;
    const Mat plus = model.g2(probe);
    probe[j] = at[j] - fd_step;
    const Mat minus = model.g2(probe);
    probe[j] = at[j];
    g.col(j) = Eigen::Map<const Vec>((plus - minus).eval().data(), g.rows()) / (2.0 * fd_step);
  }
  return g;
}

// f(x) + 1/2 e S tr(G2^T G2) + S G2^T vec(g2(x_d)), S = ||Sigma Sigma^T||_Finf,
// with G2 taken as the first-order Jacobian of vec(g2) at x_d.
inline Vec true_uncertainty(const Vec& x, const Vec& x_d, const Vec& e, const PlantModel& model,
                            double fd_step, double sigma_norm) {
  const Mat g2j = diffusion_jacobian(model, x_d, fd_step);
  const Mat g2d = model.g2(x_d);
  const Eigen::Map<const Vec> vec_g2(g2d.data(), g2d.size());
  return model.f(x) + 0.5 * sigma_norm * (g2j.transpose() * g2j).trace() * e +
         sigma_norm * (g2j.transpose() * vec_g2);
}

}  // namespace lyat
