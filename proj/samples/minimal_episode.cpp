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

// Runs one adaptive and one baseline figure-8 episode with the library API
// and prints their tracking RMS.

#include <iostream>

#include "lyat/sim.hpp"

int main() {
  lyat::ArchConfig arch;
  arch.norms = {lyat::LayerNorms{{0.8, 0.0}, {0.7, 0.0}, {0.7, 0.0}, {0.8, 0.0}, {0.7, 0.0}}};
  const lyat::AdaptConfig adapt;
  const lyat::ControlConfig ctrl;
  const lyat::PlantModel plant = lyat::matched_integrator();
  const lyat::ReferenceTrajectory ref;

  lyat::SimConfig sim;
  sim.duration = 30.0;
  sim.seed = 1;

  for (bool baseline : {false, true}) {
    sim.baseline = baseline;
    const lyat::EpisodeTrace trace = lyat::run_episode(arch, adapt, ctrl, plant, ref, sim);
    std::cout << (baseline ? "baseline" : "adaptive") << ": rms(t >= 10 s) = "
              << lyat::rms_error(trace, 10.0) << " m, final ||theta|| = "
              << trace.rows.back().theta_norm << '\n';
  }
}
