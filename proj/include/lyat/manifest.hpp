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

// Run configuration: a JSON tree with sections arch / adapt / ctrl / plant /
// ref / sim. Missing keys take the defaults below (the figure-8 experiment
// settings); unknown keys and wrongly typed values are errors that name the
// offending key path.

#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "lyat/adaptation.hpp"
#include "lyat/control.hpp"
#include "lyat/errors.hpp"
#include "lyat/hash.hpp"
#include "lyat/params.hpp"
#include "lyat/plant.hpp"
#include "lyat/sim.hpp"

namespace lyat {

using json = nlohmann::json;

struct RunManifest {
  ArchConfig arch;
  AdaptConfig adapt;
  ControlConfig ctrl;
  std::string plant_model = "matched_integrator";
  PlantParams plant;
  ReferenceTrajectory ref;
  SimConfig sim;
  json resolved;  // full tree after defaults, as parsed

  PlantModel make_plant_model() const { return make_plant(plant_model, plant); }

  // Hash of the resolved tree without the per-episode fields (seed, baseline
  // flag). nlohmann::json objects are key-sorted, so the dump is independent
  // of the order keys appeared in the file.
  std::string config_hash() const {
    json j = resolved;
    j["sim"].erase("seed");
    j["sim"].erase("baseline");
    return to_hex(fnv1a64(j.dump()));
  }
};

inline json default_config_json() {
  return json::parse(R"({
    "arch": {
      "n": 6, "m": 6, "s": 6, "tau": 20, "N": 1, "H": 3, "d_f": 5,
      "layer_norm": {
        "gamma_1": 0.8, "beta_1": 0.0,
        "gamma_2": 0.7, "beta_2": 0.0,
        "gamma_3": 0.7, "beta_3": 0.0,
        "gamma_f": 0.8, "beta_f": 0.0,
        "gamma_F": 0.7, "beta_F": 0.0
      },
      "init_gain": 0.01,
      "ln_epsilon": 1e-8,
      "attention": "flattened"
    },
    "adapt": { "gamma": 0.02, "sigma": 1e-6, "theta_bar": 10.0, "proj_band": 0.5 },
    "ctrl": { "k_e": 0.8, "vel_max": 1.8, "saturate": true },
    "plant": { "model": "matched_integrator", "drift_scale": 0.4, "diffusion_scale": 0.05,
               "sigma_w": 1.0 },
    "ref": { "a": 7.5, "b": 3.0, "h": 2.5, "omega": 0.15 },
    "sim": {
      "physics_dt": 0.002, "control_dt": 0.02, "transformer_dt": 0.05,
      "duration": 240.0, "seed": 0, "baseline": false,
      "x0": [0.0, 0.0, 2.5, 0.0, 0.0, 0.0],
      "transient_cutoff": 10.0, "feedforward": "secant",
      "warmup": { "encoder": "zeros", "decoder": "gaussian", "scale": 0.1, "path": "" }
    }
  })");
}

namespace detail {

// Overlays `user` onto `base`, rejecting keys that `base` does not have.
// `layer_norm` may be an object (shared by every layer) or an array of
// objects (one per layer); `adapt.gamma` may be a number or a p x p matrix.
inline void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("expected an object", path.empty() ? "<root>" : path);
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key", key);
    json& slot = base[it.key()];
    const json& val = it.value();
    if (key == "arch.layer_norm" && val.is_array()) {
      json layers = json::array();
      for (std::size_t i = 0; i < val.size(); ++i) {
        json one = slot.is_array() ? slot.at(0) : slot;
        merge_strict(one, val[i], key + "[" + std::to_string(i) + "]");
        layers.push_back(one);
      }
      slot = layers;
    } else if (key == "adapt.gamma") {
      if (!val.is_number() && !val.is_array())
        throw ConfigError("expected a number or a matrix", key);
      slot = val;
    } else if (slot.is_object()) {
      merge_strict(slot, val, key);
    } else if (slot.is_number() != val.is_number() || slot.is_boolean() != val.is_boolean() ||
               slot.is_string() != val.is_string() || slot.is_array() != val.is_array()) {
      throw ConfigError("wrong type (expected " + std::string(slot.type_name()) + ", got " +
                            val.type_name() + ")",
                        key);
    } else {
      slot = val;
    }
  }
}

inline double num(const json& j, const char* key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("expected a number", path + "." + key);
  return v.get<double>();
}

inline int integer(const json& j, const char* key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError("expected an integer", path + "." + key);
  return v.get<int>();
}

inline LayerNorms parse_norms(const json& j, const std::string& path) {
  auto nc = [&](const char* g, const char* b) {
    return NormConstants{num(j, g, path), num(j, b, path)};
  };
  LayerNorms ln;
  ln.self_attn = nc("gamma_1", "beta_1");
  ln.masked_attn = nc("gamma_2", "beta_2");
  ln.cross_attn = nc("gamma_3", "beta_3");
  ln.enc_ff = nc("gamma_f", "beta_f");
  ln.dec_ff = nc("gamma_F", "beta_F");
  return ln;
}

inline WarmupKind parse_warmup(const std::string& s, const std::string& key) {
  if (s == "zeros") return WarmupKind::Zeros;
  if (s == "gaussian") return WarmupKind::Gaussian;
  if (s == "from_file") return WarmupKind::FromFile;
  throw ConfigError("expected zeros | gaussian | from_file", key);
}

}  // namespace detail

inline RunManifest parse_manifest(const json& user) {
  json tree = default_config_json();
  detail::merge_strict(tree, user, "");

  RunManifest m;
  m.resolved = tree;

  const json& a = tree["arch"];
  m.arch.n = detail::integer(a, "n", "arch");
  m.arch.m = detail::integer(a, "m", "arch");
  m.arch.s = detail::integer(a, "s", "arch");
  m.arch.tau = detail::integer(a, "tau", "arch");
  m.arch.layers = detail::integer(a, "N", "arch");
  m.arch.heads = detail::integer(a, "H", "arch");
  m.arch.d_ff = detail::integer(a, "d_f", "arch");
  m.arch.init_gain = detail::num(a, "init_gain", "arch");
  m.arch.ln_epsilon = detail::num(a, "ln_epsilon", "arch");
  // Attention treats C and A as single long vectors (scores are d_k x d_k
  // outer products). The key exists so configs state this; nothing else is
  // implemented.
  if (a["attention"] != "flattened")
    throw ConfigError("only \"flattened\" attention is implemented", "arch.attention");
  m.arch.norms.clear();
  const json& ln = a["layer_norm"];
  if (ln.is_array()) {
    for (std::size_t i = 0; i < ln.size(); ++i)
      m.arch.norms.push_back(
          detail::parse_norms(ln[i], "arch.layer_norm[" + std::to_string(i) + "]"));
  } else {
    m.arch.norms.assign(std::max(m.arch.layers, 1), detail::parse_norms(ln, "arch.layer_norm"));
  }

  const json& ad = tree["adapt"];
  if (ad["gamma"].is_number()) {
    m.adapt.gamma = ad["gamma"].get<double>();
  } else {
    const json& rows = ad["gamma"];
    Mat g(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].is_array() || rows[i].size() != rows.size())
        throw ConfigError("gain matrix must be square", "adapt.gamma");
      for (std::size_t k = 0; k < rows.size(); ++k) g(i, k) = rows[i][k].get<double>();
    }
    m.adapt.gamma = g;
  }
  m.adapt.sigma = detail::num(ad, "sigma", "adapt");
  m.adapt.theta_bar = detail::num(ad, "theta_bar", "adapt");
  m.adapt.proj_band = detail::num(ad, "proj_band", "adapt");
  m.arch.theta_bar = m.adapt.theta_bar;

  const json& c = tree["ctrl"];
  m.ctrl.k_e = detail::num(c, "k_e", "ctrl");
  m.ctrl.vel_max = detail::num(c, "vel_max", "ctrl");
  m.ctrl.saturate = c["saturate"].get<bool>();

  const json& pl = tree["plant"];
  m.plant_model = pl["model"].get<std::string>();
  m.plant.n = m.arch.n;
  m.plant.s = m.arch.s;
  m.plant.drift_scale = detail::num(pl, "drift_scale", "plant");
  m.plant.diffusion_scale = detail::num(pl, "diffusion_scale", "plant");
  m.plant.sigma_w = detail::num(pl, "sigma_w", "plant");
  if (m.arch.m != m.arch.n)
    throw ConfigError("built-in plants have g1 = I, so m must equal n", "arch.m");
  make_plant(m.plant_model, m.plant);  // validates the model name

  const json& r = tree["ref"];
  m.ref.a = detail::num(r, "a", "ref");
  m.ref.b = detail::num(r, "b", "ref");
  m.ref.h = detail::num(r, "h", "ref");
  m.ref.omega = detail::num(r, "omega", "ref");

  const json& s = tree["sim"];
  m.sim.physics_dt = detail::num(s, "physics_dt", "sim");
  m.sim.control_dt = detail::num(s, "control_dt", "sim");
  m.sim.transformer_dt = detail::num(s, "transformer_dt", "sim");
  m.sim.duration = detail::num(s, "duration", "sim");
  if (!s["seed"].is_number_unsigned() && !s["seed"].is_number_integer())
    throw ConfigError("expected a non-negative integer", "sim.seed");
  m.sim.seed = s["seed"].get<std::uint64_t>();
  m.sim.baseline = s["baseline"].get<bool>();
  m.sim.transient_cutoff = detail::num(s, "transient_cutoff", "sim");
  const std::string ff = s["feedforward"].get<std::string>();
  if (ff == "secant") m.sim.feedforward = Feedforward::Secant;
  else if (ff == "analytic") m.sim.feedforward = Feedforward::Analytic;
  else throw ConfigError("expected secant | analytic", "sim.feedforward");
  const json& x0 = s["x0"];
  m.sim.x0 = Vec(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (!x0[i].is_number()) throw ConfigError("expected numbers", "sim.x0");
    m.sim.x0[i] = x0[i].get<double>();
  }
  if (m.sim.x0.size() != m.arch.n) throw ConfigError("length must equal arch.n", "sim.x0");
  const json& w = s["warmup"];
  m.sim.warmup.encoder = detail::parse_warmup(w["encoder"].get<std::string>(), "sim.warmup.encoder");
  m.sim.warmup.decoder = detail::parse_warmup(w["decoder"].get<std::string>(), "sim.warmup.decoder");
  m.sim.warmup.scale = detail::num(w, "scale", "sim.warmup");
  m.sim.warmup.path = w["path"].get<std::string>();

  m.arch.validate();
  m.adapt.validate(m.adapt.scalar_gain() ? -1 : dim_of(m.arch).p);
  m.ctrl.validate();
  m.sim.validate();
  return m;
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", "--config");
  json user;
  try {
    user = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "--config");
  }
  return parse_manifest(user);
}

}  // namespace lyat
