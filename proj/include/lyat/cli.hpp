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

// `lyat` command line: run | sweep | gradcheck | dims.
//
// Exit codes: 0 ok, 1 usage, 2 config error, 3 numeric abort, 4 gradcheck failure.
// Failures print one JSON object on stderr: {"error": kind, "key": ..., "message": ...}.

#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lyat/jacobian.hpp"
#include "lyat/manifest.hpp"
#include "lyat/sim.hpp"

namespace lyat::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kNumeric = 3, kCheckFailed = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool baseline = false;
  std::optional<double> duration;
  bool no_saturation = false;
  int seeds = 10;
  int jobs = 1;
  bool checkpoint = false;
  // gradcheck
  double gain = 1.0;
  double h = 1e-6;
  double tol = 1e-5;
  int instances = 3;
};

namespace detail {

inline void emit_error(std::ostream& err, const char* kind, const std::string& key,
                       const std::string& message) {
  json j;
  j["error"] = kind;
  j["key"] = key;
  j["message"] = message;
  err << j.dump() << '\n';
}

inline RunManifest resolve(const Options& o) {
  RunManifest m = o.config.empty() ? parse_manifest(json::object()) : load_manifest(o.config);
  if (o.seed || o.duration || o.baseline || o.no_saturation) {
    json overlay = json::object();
    if (o.seed) overlay["sim"]["seed"] = *o.seed;
    if (o.duration) overlay["sim"]["duration"] = *o.duration;
    if (o.baseline) overlay["sim"]["baseline"] = true;
    if (o.no_saturation) overlay["ctrl"]["saturate"] = false;
    json merged = m.resolved;
    merged.merge_patch(overlay);
    m = parse_manifest(merged);
  }
  return m;
}

inline std::string out_dir(const Options& o) {
  if (const char* env = std::getenv("LYAT_OUT"); env && *env) return env;
  return o.out;
}

inline std::string episode_stem(std::uint64_t seed, bool baseline) {
  return "run_seed" + std::to_string(seed) + (baseline ? "_baseline" : "");
}

// Runs one episode and writes its trace, summary and optional checkpoint.
// Returns the summary JSON path.
inline std::string run_one(const RunManifest& m, const std::string& dir, bool checkpoint,
                           std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string stem = episode_stem(m.sim.seed, m.sim.baseline);
  const std::string csv_path = (fs::path(dir) / (stem + ".csv")).string();
  const std::string json_path = (fs::path(dir) / (stem + ".json")).string();
  const std::string theta_path = (fs::path(dir) / (stem + "_theta.bin")).string();

  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot write '" + csv_path + "'", "--out");
  const PlantModel plant = m.make_plant_model();
  ThetaVector final_theta;
  EpisodeOptions opts;
  opts.csv = &csv;
  opts.final_theta = &final_theta;

  std::vector<std::string> files = {csv_path, json_path};
  auto write_summary = [&](const EpisodeTrace& trace) {
    std::ofstream js(json_path, std::ios::binary);
    js << summary_json(trace, m.config_hash(), m.sim.seed, m.sim.baseline, files).dump(2)
       << '\n';
  };
  try {
    const EpisodeTrace trace =
        run_episode(m.arch, m.adapt, m.ctrl, plant, m.ref, m.sim, opts);
    if (checkpoint) {
      std::ofstream bin(theta_path, std::ios::binary);
      save_theta(bin, m.arch, final_theta);
      files.push_back(theta_path);
    }
    write_summary(trace);
    log << stem << ": rms_total=" << format_double(trace.summary.rms_total)
        << " rms_post_transient=" << format_double(trace.summary.rms_post_transient) << '\n';
  } catch (const EpisodeAborted& ab) {
    write_summary(ab.partial());
    throw;
  }
  return json_path;
}

inline int cmd_dims(const RunManifest& m, std::ostream& out) {
  const Dims d = dim_of(m.arch);
  json j;
  j["p"] = d.p;
  for (int g = 0; g < kNumGroups; ++g) j["groups"][group_name(static_cast<Group>(g))] = d.group_sizes[g];
  out << "p = " << d.p << '\n' << j.dump() << '\n';
  return kOk;
}

inline int cmd_gradcheck(const RunManifest& m, const Options& o, std::ostream& out) {
  const ArchConfig& arch = m.arch;
  const PosEncoding pe = positional_encoding(arch);
  double worst = 0.0;
  Index excluded = 0, compared = 0;
  std::vector<double> ratios;
  for (int i = 0; i < o.instances; ++i) {
    const std::uint64_t seed = m.sim.seed + static_cast<std::uint64_t>(i);
    const ThetaVector theta = init_theta(arch, o.gain, seed);
    Rng rng(seed ^ 0x5eedULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    WindowState w(arch);
    for (Index k = 0; k < w.zeta_enc.size(); ++k) w.zeta_enc[k] = gauss(rng);
    for (Index k = 0; k < w.phi_hist.size(); ++k) w.phi_hist[k] = gauss(rng);
    const JacobianMatrix jac = jacobian(w, theta, pe, arch);
    const FdJacobian fd = fd_jacobian(w, theta, pe, arch, o.h);
    const JacobianComparison cmp = compare_jacobians(jac, fd);
    worst = std::max(worst, cmp.max_rel_error);
    excluded += cmp.excluded;
    compared += cmp.compared;
  }
  const bool pass = worst <= o.tol;
  json j;
  j["p"] = dim_of(arch).p;
  j["instances"] = o.instances;
  j["h"] = o.h;
  j["max_rel_error"] = worst;
  j["compared_columns"] = compared;
  j["excluded_kink_columns"] = excluded;
  j["tolerance"] = o.tol;
  j["pass"] = pass;
  out << j.dump() << '\n';
  return pass ? kOk : kCheckFailed;
}

}  // namespace detail

inline int cmd_run(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Adaptive transformer closed-loop simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file (defaults built in)");
    sub->add_option("--seed", o.seed, "episode seed (first seed for sweep)");
  };
  auto add_episode = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--out", o.out, "output directory (LYAT_OUT overrides)");
    sub->add_flag("--baseline", o.baseline, "disable the transformer term and adaptation");
    sub->add_option("--duration", o.duration, "episode length in seconds");
    sub->add_flag("--no-saturation", o.no_saturation, "do not clamp commands");
    sub->add_flag("--checkpoint", o.checkpoint, "write the final parameter vector");
  };

  CLI::App* run = app.add_subcommand("run", "single episode");
  add_episode(run);
  CLI::App* sweep = app.add_subcommand("sweep", "independent episodes over consecutive seeds");
  add_episode(sweep);
  sweep->add_option("--seeds", o.seeds, "number of seeds")->check(CLI::PositiveNumber);
  sweep->add_option("--jobs", o.jobs, "concurrent episodes")->check(CLI::PositiveNumber);
  CLI::App* grad = app.add_subcommand("gradcheck", "analytic vs finite-difference Jacobian");
  add_common(grad);
  grad->add_option("--gain", o.gain, "Xavier gain of the random test parameters");
  grad->add_option("--fd-step", o.h, "central-difference step");
  grad->add_option("--tol", o.tol, "max relative column error");
  grad->add_option("--instances", o.instances, "random instances")->check(CLI::PositiveNumber);
  CLI::App* dims = app.add_subcommand("dims", "parameter count and group sizes");
  add_common(dims);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    detail::emit_error(err, "usage", "", e.what());
    return kUsage;
  }

  try {
    const RunManifest m = detail::resolve(o);
    if (*dims) return detail::cmd_dims(m, out);
    if (*grad) return detail::cmd_gradcheck(m, o, out);

    const std::string dir = detail::out_dir(o);
    if (*run) {
      detail::run_one(m, dir, o.checkpoint, out);
      return kOk;
    }

    // sweep
    std::vector<RunManifest> episodes;
    for (int i = 0; i < o.seeds; ++i) {
      json patch;
      patch["sim"]["seed"] = m.sim.seed + static_cast<std::uint64_t>(i);
      json tree = m.resolved;
      tree.merge_patch(patch);
      episodes.push_back(parse_manifest(tree));
    }
    std::vector<std::string> summaries(episodes.size());
    std::vector<std::ostringstream> logs(episodes.size());
    std::vector<std::string> failures(episodes.size());
    run_parallel(episodes.size(), o.jobs, [&](std::size_t i) {
      try {
        summaries[i] = detail::run_one(episodes[i], dir, o.checkpoint, logs[i]);
      } catch (const EpisodeAborted& ab) {
        summaries[i] = (std::filesystem::path(dir) /
                        (detail::episode_stem(episodes[i].sim.seed, episodes[i].sim.baseline) +
                         ".json")).string();
        failures[i] = ab.what();
      }
    });
    for (auto& l : logs) out << l.str();

    const std::string sweep_path =
        (std::filesystem::path(dir) / (m.sim.baseline ? "sweep_baseline.json" : "sweep.json"))
            .string();
    json j;
    j["config_hash"] = m.config_hash();
    j["seeds"] = json::array();
    for (const auto& e : episodes) j["seeds"].push_back(e.sim.seed);
    j["files"] = summaries;
    j["files"].push_back(sweep_path);
    bool any_failed = false;
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (failures[i].empty()) continue;
      any_failed = true;
      j["aborted"][std::to_string(episodes[i].sim.seed)] = failures[i];
    }
    std::ofstream(sweep_path, std::ios::binary) << j.dump(2) << '\n';
    if (any_failed) {
      detail::emit_error(err, "numeric", "sim", "one or more episodes aborted; see " + sweep_path);
      return kNumeric;
    }
    return kOk;
  } catch (const ConfigError& e) {
    detail::emit_error(err, "config", e.key_path(), e.what());
    return kConfig;
  } catch (const NumericError& e) {
    detail::emit_error(err, "numeric", e.where(), e.what());
    return kNumeric;
  } catch (const Error& e) {
    detail::emit_error(err, "error", "", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    detail::emit_error(err, "io", "", e.what());
    return kConfig;
  }
}

}  // namespace lyat::cli
