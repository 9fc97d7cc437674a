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

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + LYAT_CLI_PATH + std::string(" ") +
                          args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof(buf), p)) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config(const char* name) { return std::string(LYAT_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("lyat_cli_" + std::to_string(::getpid()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream(p) << body;
    return p;
  }
};

TEST_F(Cli, DimsDefault) {
  const Result r = cli("dims --config " + config("default.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("p = 40080"), std::string::npos) << r.out;
}

TEST_F(Cli, DimsTiny) {
  const Result r = cli("dims --config " + config("tiny.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("p = 488"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownKeyNamesPath) {
  const fs::path p = write("bad.json", R"({"arch": {"tua": 3}})");
  const Result r = cli("dims --config " + p.string());
  EXPECT_EQ(r.code, 2);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["error"], "config");
  EXPECT_EQ(j["key"], "arch.tua");
}

TEST_F(Cli, WrongTypeNamesPath) {
  const fs::path p = write("bad.json", R"({"ctrl": {"k_e": "fast"}})");
  const Result r = cli("dims --config " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["key"], "ctrl.k_e");
}

TEST_F(Cli, IndivisibleHeadsIsConfigError) {
  const fs::path p = write("bad.json", R"({"arch": {"H": 4}})");
  const Result r = cli("dims --config " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["key"], "arch.H");
}

TEST_F(Cli, OnlyFlattenedAttention) {
  const fs::path p = write("bad.json", R"({"arch": {"attention": "tokens"}})");
  const Result r = cli("dims --config " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["key"], "arch.attention");
}

TEST_F(Cli, MissingConfigFile) {
  const Result r = cli("dims --config " + (dir / "none.json").string());
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, RunAndBaselineDifferOnlyInAdaptiveFields) {
  const std::string common = "run --config " + config("default.json") + " --duration 12 --seed 3 --out " + dir.string();
  ASSERT_EQ(cli(common).code, 0);
  ASSERT_EQ(cli(common + " --baseline").code, 0);
  ASSERT_TRUE(fs::exists(dir / "run_seed3.csv"));
  ASSERT_TRUE(fs::exists(dir / "run_seed3_baseline.csv"));
  const json a = json::parse(slurp(dir / "run_seed3.json"));
  const json b = json::parse(slurp(dir / "run_seed3_baseline.json"));
  EXPECT_EQ(a["config_hash"], b["config_hash"]);
  EXPECT_EQ(a["seed"], b["seed"]);
  EXPECT_EQ(a["baseline"], false);
  EXPECT_EQ(b["baseline"], true);
  EXPECT_NE(a["rms_total"], b["rms_total"]);
  EXPECT_EQ(b["safeguard_count"], 0);
  EXPECT_EQ(a["files"].size(), 2u);
  EXPECT_EQ(a["files"][0], (dir / "run_seed3.csv").string());
}

TEST_F(Cli, RunIsByteIdentical) {
  const std::string common = "run --config " + config("default.json") + " --duration 3 --seed 1 --out ";
  ASSERT_EQ(cli(common + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli(common + (dir / "b").string()).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "run_seed1.csv"), slurp(dir / "b" / "run_seed1.csv"));
}

TEST_F(Cli, EnvironmentOverridesOut) {
  const fs::path target = dir / "from_env";
  const Result r = cli("run --duration 1 --out " + (dir / "ignored").string(),
                       "LYAT_OUT=" + target.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(target / "run_seed0.csv"));
  EXPECT_FALSE(fs::exists(dir / "ignored"));
}

TEST_F(Cli, CheckpointIsListed) {
  ASSERT_EQ(cli("run --duration 1 --checkpoint --out " + dir.string()).code, 0);
  const json a = json::parse(slurp(dir / "run_seed0.json"));
  ASSERT_EQ(a["files"].size(), 3u);
  EXPECT_EQ(fs::file_size(dir / "run_seed0_theta.bin"), 8u + 8u * 40080u);
}

TEST_F(Cli, SweepWritesManifest) {
  const Result r = cli("sweep --duration 1 --seeds 3 --jobs 2 --seed 5 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const json s = json::parse(slurp(dir / "sweep.json"));
  EXPECT_EQ(s["seeds"], json::array({5, 6, 7}));
  for (int seed : {5, 6, 7}) EXPECT_TRUE(fs::exists(dir / ("run_seed" + std::to_string(seed) + ".csv")));
}

TEST_F(Cli, GradcheckTinyPasses) {
  const Result r = cli("gradcheck --config " + config("tiny.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["p"], 488);
  EXPECT_LE(j["max_rel_error"].get<double>(), 1e-5);
  EXPECT_TRUE(j.contains("excluded_kink_columns"));
  EXPECT_EQ(j["pass"], true);
}

TEST_F(Cli, GradcheckImpossibleToleranceFails) {
  const Result r = cli("gradcheck --config " + config("tiny.json") + " --tol 1e-300");
  EXPECT_EQ(r.code, 4);
}

TEST_F(Cli, HashIndependentOfKeyOrder) {
  const fs::path a = write("a.json", R"({"ctrl": {"k_e": 0.7, "vel_max": 1.5}, "sim": {"duration": 1}})");
  const fs::path b = write("b.json", R"({"sim": {"duration": 1}, "ctrl": {"vel_max": 1.5, "k_e": 0.7}})");
  ASSERT_EQ(cli("run --config " + a.string() + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("run --config " + b.string() + " --out " + (dir / "b").string()).code, 0);
  const json ja = json::parse(slurp(dir / "a" / "run_seed0.json"));
  const json jb = json::parse(slurp(dir / "b" / "run_seed0.json"));
  EXPECT_EQ(ja["config_hash"], jb["config_hash"]);
  const fs::path c = write("c.json", R"({"ctrl": {"k_e": 0.6}, "sim": {"duration": 1}})");
  ASSERT_EQ(cli("run --config " + c.string() + " --out " + (dir / "c").string()).code, 0);
  EXPECT_NE(json::parse(slurp(dir / "c" / "run_seed0.json"))["config_hash"], ja["config_hash"]);
}

TEST_F(Cli, UsageErrorWithoutSubcommand) { EXPECT_EQ(cli("").code, 1); }

}  // namespace
