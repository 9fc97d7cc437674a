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

// Closed-loop episode harness.
//
// Three clocks share one physics grid: the plant advances every physics_dt,
// the controller and the weight update run every control_dt, and the
// transformer output is refreshed every transformer_dt and held in between.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lyat/adaptation.hpp"
#include "lyat/control.hpp"
#include "lyat/errors.hpp"
#include "lyat/jacobian.hpp"
#include "lyat/params.hpp"
#include "lyat/plant.hpp"
#include "lyat/transformer.hpp"

namespace lyat {

enum class WarmupKind { Zeros, Gaussian, FromFile };

struct WarmupPolicy {
  WarmupKind encoder = WarmupKind::Zeros;
  WarmupKind decoder = WarmupKind::Gaussian;
  double scale = 0.1;
  std::string path;  // trace CSV for FromFile
};

// What the controller is fed as x_d-dot on a control tick. Secant uses the
// exact reference increment over the coming hold interval, which makes the
// sampled-data loop exact for an integrator plant; Analytic uses the
// instantaneous derivative.
enum class Feedforward { Secant, Analytic };

struct SimConfig {
  double physics_dt = 0.002;
  double control_dt = 0.02;
  double transformer_dt = 0.05;
  double duration = 60.0;
  std::uint64_t seed = 0;
  WarmupPolicy warmup;
  bool baseline = false;
  Vec x0 = (Vec(6) << 0, 0, 2.5, 0, 0, 0).finished();
  double transient_cutoff = 10.0;
  Feedforward feedforward = Feedforward::Secant;

  static long long ratio(double num, double den, const char* key) {
    const double r = num / den;
    const double rr = std::round(r);
    if (rr < 1.0 || std::abs(r - rr) > 1e-9 * std::max(1.0, rr))
      throw ConfigError("must be a positive integer multiple of physics_dt", key);
    return static_cast<long long>(rr);
  }

  long long control_every() const { return ratio(control_dt, physics_dt, "sim.control_dt"); }
  long long transformer_every() const {
    return ratio(transformer_dt, physics_dt, "sim.transformer_dt");
  }
  long long physics_steps() const {
    return static_cast<long long>(std::llround(duration / physics_dt));
  }

  void validate() const {
    if (!(physics_dt > 0.0)) throw ConfigError("must be > 0", "sim.physics_dt");
    if (!(duration > 0.0)) throw ConfigError("must be > 0", "sim.duration");
    control_every();
    transformer_every();
    if (!(warmup.scale >= 0.0)) throw ConfigError("must be >= 0", "sim.warmup.scale");
    if ((warmup.encoder == WarmupKind::FromFile || warmup.decoder == WarmupKind::FromFile) &&
        warmup.path.empty())
      throw ConfigError("from_file warm-up needs a path", "sim.warmup.path");
  }
};

struct TraceRow {
  double t = 0.0;
  Vec x, x_d, e, u, phi;
  double theta_norm = 0.0;
  double rms_running = 0.0;
};

struct TraceSummary {
  double rms_total = 0.0;
  double rms_post_transient = 0.0;
  double max_e_post_transient = 0.0;
  long long saturation_count = 0;
  long long safeguard_count = 0;
  double wall_clock_s = 0.0;
  bool aborted = false;
  std::string abort_message;
};

struct EpisodeTrace {
  int n = 0, m = 0;
  int position_dims = 0;
  std::vector<TraceRow> rows;
  TraceSummary summary;

  // Tracking-error magnitude used by every metric: positions only when the
  // plant declares a position/velocity split.
  double metric_norm(const Vec& e) const {
    return position_dims > 0 ? e.head(position_dims).norm() : e.norm();
  }
};

inline double rms_error(const EpisodeTrace& trace, double from_t) {
  double acc = 0.0;
  long long count = 0;
  for (const TraceRow& r : trace.rows) {
    if (r.t < from_t) continue;
    const double v = trace.metric_norm(r.e);
    acc += v * v;
    ++count;
  }
  if (count == 0) throw Error("rms_error: no trace rows at or after t = " + std::to_string(from_t));
  return std::sqrt(acc / static_cast<double>(count));
}

inline double max_error(const EpisodeTrace& trace, double from_t, double to_t = INFINITY) {
  double best = 0.0;
  for (const TraceRow& r : trace.rows)
    if (r.t >= from_t && r.t < to_t) best = std::max(best, trace.metric_norm(r.e));
  return best;
}

// ---------------------------------------------------------------------------
// CSV trace

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trace_csv_header(int n, int m) {
  std::string h = "t";
  auto add = [&](const char* prefix, int count) {
    for (int i = 0; i < count; ++i) h += std::string(",") + prefix + std::to_string(i);
  };
  add("x_", n);
  add("xd_", n);
  add("e_", n);
  add("u_", m);
  add("phi_", n);
  h += ",theta_norm,rms_running";
  return h;
}

inline std::string trace_csv_line(const TraceRow& r) {
  std::string line = format_double(r.t);
  for (const Vec* v : {&r.x, &r.x_d, &r.e, &r.u, &r.phi})
    for (Index i = 0; i < v->size(); ++i) line += "," + format_double((*v)[i]);
  line += "," + format_double(r.theta_norm) + "," + format_double(r.rms_running);
  return line;
}

class CsvTraceWriter {
 public:
  CsvTraceWriter(std::ostream& os, int n, int m) : os_(os) {
    os_ << trace_csv_header(n, m) << '\n';
  }
  void write(const TraceRow& r) { os_ << trace_csv_line(r) << '\n'; }
  void flush() { os_.flush(); }

 private:
  std::ostream& os_;
};

inline void write_trace_csv(std::ostream& os, const EpisodeTrace& trace) {
  CsvTraceWriter w(os, trace.n, trace.m);
  for (const TraceRow& r : trace.rows) w.write(r);
  w.flush();
}

// Parses a trace written by CsvTraceWriter. Widths come from the header.
inline EpisodeTrace read_trace_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("empty trace file", "sim.warmup.path");
  int n = 0, m = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("x_", 0) == 0) ++n;
      if (col.rfind("u_", 0) == 0) ++m;
    }
  }
  if (n == 0 || header != trace_csv_header(n, m))
    throw ConfigError("unrecognized trace header", "sim.warmup.path");
  EpisodeTrace trace;
  trace.n = n;
  trace.m = m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 1 + 4 * n + m + 2)
      throw ConfigError("malformed trace row", "sim.warmup.path");
    TraceRow r;
    std::size_t k = 0;
    r.t = vals[k++];
    auto take = [&](int count) {
      Vec v(count);
      for (int i = 0; i < count; ++i) v[i] = vals[k++];
      return v;
    };
    r.x = take(n);
    r.x_d = take(n);
    r.e = take(n);
    r.u = take(m);
    r.phi = take(n);
    r.theta_norm = vals[k++];
    r.rms_running = vals[k++];
    trace.rows.push_back(std::move(r));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Episode

// Thrown when an episode has to stop early; carries everything logged so far.
class EpisodeAborted : public NumericError {
 public:
  EpisodeAborted(const NumericError& cause, std::shared_ptr<EpisodeTrace> partial)
      : NumericError(cause.what(), cause.where()), partial_(std::move(partial)) {}
  const EpisodeTrace& partial() const { return *partial_; }

 private:
  std::shared_ptr<EpisodeTrace> partial_;
};

namespace detail {
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline WindowState initial_window(const ArchConfig& arch, const SimConfig& sim, Rng& rng) {
  WindowState w(arch);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (sim.warmup.encoder == WarmupKind::Gaussian)
    for (Index i = 0; i < w.zeta_enc.size(); ++i) w.zeta_enc[i] = sim.warmup.scale * gauss(rng);
  if (sim.warmup.decoder == WarmupKind::Gaussian)
    for (Index i = 0; i < w.phi_hist.size(); ++i) w.phi_hist[i] = sim.warmup.scale * gauss(rng);

  if (sim.warmup.encoder == WarmupKind::FromFile || sim.warmup.decoder == WarmupKind::FromFile) {
    std::ifstream in(sim.warmup.path);
    if (!in) throw ConfigError("cannot open '" + sim.warmup.path + "'", "sim.warmup.path");
    const EpisodeTrace prior = read_trace_csv(in);
    if (prior.n != arch.n) throw ConfigError("trace state width differs", "sim.warmup.path");
    const std::size_t take = std::min<std::size_t>(prior.rows.size(), arch.tau);
    for (std::size_t i = prior.rows.size() - take; i < prior.rows.size(); ++i) {
      const TraceRow& r = prior.rows[i];
      if (sim.warmup.encoder == WarmupKind::FromFile) w.push_sample(r.x, r.x_d);
      if (sim.warmup.decoder == WarmupKind::FromFile) w.push_output(r.phi);
    }
    // Replayed history is padding for this episode, not real samples.
    w.enc_fill = 0;
    w.dec_fill = 0;
  }
  return w;
}
}  // namespace detail

struct EpisodeOptions {
  std::ostream* csv = nullptr;                   // stream rows as they are produced
  const ThetaVector* initial_theta = nullptr;    // overrides Xavier init
  ThetaVector* final_theta = nullptr;            // receives the last estimate
  std::function<void(const WindowState&)> on_transformer_tick;  // test hook
};

inline EpisodeTrace run_episode(const ArchConfig& arch, const AdaptConfig& adapt,
                                const ControlConfig& ctrl, const PlantModel& plant,
                                const ReferenceTrajectory& ref, const SimConfig& sim,
                                const EpisodeOptions& opts = {}) {
  arch.validate();
  ctrl.validate();
  sim.validate();
  const Index p = dim_of(arch).p;
  adapt.validate(p);
  if (plant.n != arch.n || plant.m != arch.m || plant.s != arch.s)
    throw ConfigError("plant dimensions (n, m, s) do not match arch", "plant");
  if (sim.x0.size() != arch.n) throw ConfigError("initial state has wrong length", "sim.x0");

  const auto started = std::chrono::steady_clock::now();
  auto trace = std::make_shared<EpisodeTrace>();
  trace->n = arch.n;
  trace->m = arch.m;
  trace->position_dims = plant.position_dims;

  Rng noise_rng(detail::mix_seed(sim.seed, 0));
  Rng warm_rng(detail::mix_seed(sim.seed, 1));
  ThetaVector theta = opts.initial_theta ? *opts.initial_theta
                                         : init_theta(arch, arch.init_gain, sim.seed);
  if (theta.size() != p) throw ConfigError("initial theta has wrong length", "checkpoint");
  const PosEncoding pe = positional_encoding(arch);
  WindowState window = detail::initial_window(arch, sim, warm_rng);
  PinvCache pinv(plant.g1_constant);

  std::optional<CsvTraceWriter> csv;
  if (opts.csv) csv.emplace(*opts.csv, arch.n, arch.m);

  const long long steps = sim.physics_steps();
  const long long ctrl_every = sim.control_every();
  const long long tf_every = sim.transformer_every();
  const double cdt = ctrl_every * sim.physics_dt;

  Vec x = sim.x0;
  Vec phi = Vec::Zero(arch.n);
  Vec u = Vec::Zero(arch.m);
  double sq_acc = 0.0;
  long long sq_count = 0;
  ForwardTape tape;
  const char* stage = "sim";

  try {
    for (long long k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * sim.physics_dt;
      const bool ctrl_tick = k % ctrl_every == 0;
      const bool tf_tick = k % tf_every == 0;

      Vec x_d, xd_dot;
      if (ctrl_tick) {
        std::tie(x_d, xd_dot) = figure8(t, ref);
        if (x_d.size() != arch.n) throw ConfigError("reference width != n", "ref");
        window.push_sample(x, x_d);
      }
      if (tf_tick && !sim.baseline) {
        stage = "transformer";
        phi = forward(window, theta, pe, arch);
        window.push_output(phi);
        if (opts.on_transformer_tick) opts.on_transformer_tick(window);
      }
      if (ctrl_tick) {
        stage = "control";
        Vec ff = xd_dot;
        if (sim.feedforward == Feedforward::Secant) ff = (figure8(t + cdt, ref).first - x_d) / cdt;
        const ControlOutput co = control_from_pinv(x, x_d, ff, phi, pinv.get(plant.g1(x)), ctrl);
        u = co.u;
        trace->summary.saturation_count += co.clamped;
        const Vec e = x - x_d;

        if (!sim.baseline) {
          stage = "adaptation";
          forward(window, theta, pe, arch, &tape);
          const Vec dtheta = theta_dot(vjp(tape, theta, arch, e), theta.data(), adapt);
          if (step_theta(theta, dtheta, cdt, adapt)) ++trace->summary.safeguard_count;
        }

        TraceRow row;
        row.t = t;
        row.x = x;
        row.x_d = x_d;
        row.e = e;
        row.u = u;
        row.phi = phi;
        row.theta_norm = theta.norm();
        const double en = trace->metric_norm(e);
        sq_acc += en * en;
        ++sq_count;
        row.rms_running = std::sqrt(sq_acc / static_cast<double>(sq_count));
        if (csv) csv->write(row);
        trace->rows.push_back(std::move(row));
      }
      stage = "plant";
      x = em_step(x, u, t, sim.physics_dt, plant, noise_rng, k);
    }
  } catch (const NumericError& err) {
    trace->summary.aborted = true;
    trace->summary.abort_message = std::string(stage) + ": " + err.what();
    if (csv) csv->flush();
    trace->summary.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    throw EpisodeAborted(NumericError(err.what(), std::string(stage) + "/" + err.where()), trace);
  }
  if (csv) csv->flush();
  if (opts.final_theta) *opts.final_theta = theta;

  TraceSummary& s = trace->summary;
  s.rms_total = sq_count > 0 ? std::sqrt(sq_acc / static_cast<double>(sq_count)) : 0.0;
  if (!trace->rows.empty() && trace->rows.back().t >= sim.transient_cutoff) {
    s.rms_post_transient = rms_error(*trace, sim.transient_cutoff);
    s.max_e_post_transient = max_error(*trace, sim.transient_cutoff);
  }
  s.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return std::move(*trace);
}

// JSON summary of one episode. `files` lists every file emitted for it.
inline nlohmann::json summary_json(const EpisodeTrace& trace, const std::string& config_hash,
                                   std::uint64_t seed, bool baseline,
                                   const std::vector<std::string>& files) {
  const TraceSummary& s = trace.summary;
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["baseline"] = baseline;
  j["rms_total"] = s.rms_total;
  j["rms_post_transient"] = s.rms_post_transient;
  j["max_e_post_transient"] = s.max_e_post_transient;
  j["saturation_count"] = s.saturation_count;
  j["safeguard_count"] = s.safeguard_count;
  j["wall_clock_s"] = s.wall_clock_s;
  j["aborted"] = s.aborted;
  if (s.aborted) j["abort_message"] = s.abort_message;
  j["files"] = files;
  return j;
}

// Runs fn(index) for index in [0, count) on at most `jobs` threads. Each call
// must only touch its own outputs.
inline void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lyat
