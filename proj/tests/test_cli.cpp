/*
 * Copyright 2026 The Excursion Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("excursion_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run(const std::string& args) {
  const fs::path err = scratch("stderr.txt");
  const std::string cmd = std::string(EXCURSION_CLI_PATH) + " " + args + " 2>" + err.string();
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

} // namespace

TEST(Cli, PointCapacityRecord) {
  const auto cfg = write_config("point.json", R"({"u": 1, "l1": 0, "l2": 0})");
  const CliRun r = run("--config " + cfg.string() + " capacity2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 2u);
  EXPECT_EQ(ls[0].rfind("command,", 0), 0u);
  EXPECT_NE(ls[1].find("0.158655"), std::string::npos) << ls[1];
}

TEST(Cli, JsonOutput) {
  const auto cfg = write_config("list.json", R"({"u": [0, 1], "l1": 0.5, "l2": 0.3, "m": 12})");
  const CliRun r = run("--config " + cfg.string() + " --format json capacity2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_TRUE(doc.contains("version"));
  ASSERT_EQ(doc["records"].size(), 2u);
  for (const auto& rec : doc["records"]) {
    EXPECT_EQ(rec["command"], "capacity2");
    EXPECT_GT(rec["value"].get<double>(), 0.0);
    EXPECT_LT(rec["value"].get<double>(), 1.0);
    EXPECT_GE(rec["abs_error"].get<double>(), 0.0);
    EXPECT_FALSE(rec.contains("wall_time_s"));
  }
  EXPECT_GT(doc["records"][0]["value"].get<double>(), doc["records"][1]["value"].get<double>());
}

TEST(Cli, MissingLevelIsConfigError) {
  const auto cfg = write_config("nou.json", R"({"l1": 1, "l2": 1})");
  const CliRun r = run("--config " + cfg.string() + " capacity2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'u'"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, BadInputsExitTwo) {
  const auto broken = write_config("broken.json", R"({"u": [)");
  EXPECT_EQ(run("--config " + broken.string() + " capacity2").code, 2);
  EXPECT_EQ(run("--config " + scratch("missing.json").string() + " capacity2").code, 2);
  const auto neg = write_config("neg.json", R"({"u": 1, "l1": -1, "l2": 1})");
  EXPECT_EQ(run("--config " + neg.string() + " capacity2").code, 2);
  const auto ok = write_config("ok.json", R"({"u": 1, "l1": 0, "l2": 0})");
  EXPECT_NE(run("--config " + ok.string()).code, 0);
  EXPECT_NE(run("--config " + ok.string() + " --format xml capacity2").code, 0);
}

TEST(Cli, OutputIndependentOfWorkers) {
  const auto cfg = write_config("det.json", R"({"u": 0.5,
    "window1": {"disc": {"center": [0, 0], "radius": 1}},
    "window2": {"rectangle": {"lo": [0.5, -0.5], "hi": [2, 1]}},
    "pairs": 200, "angular_order": 6, "radial_order": 6, "dependence": true})");
  const CliRun a = run("--config " + cfg.string() + " --workers 1 second-moment");
  const CliRun b = run("--config " + cfg.string() + " --workers 3 second-moment");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  const auto cap = write_config("det2.json", R"({"u": 1, "l1": 0.6, "l2": 0.4, "m": 10, "theta_order": 8})");
  const CliRun c = run("--config " + cap.string() + " --workers 1 --format json capacity2");
  const CliRun d = run("--config " + cap.string() + " --workers 4 --format json capacity2");
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(c.out, d.out);
}

TEST(Cli, TimingAndOutputFile) {
  const auto cfg = write_config("timing.json", R"({"u": 1, "l1": 0, "l2": 0})");
  const auto out = scratch("out.json");
  const CliRun r = run("--config " + cfg.string() + " --timing --format json --output " + out.string() + " capacity2");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto doc = nlohmann::json::parse(slurp(out));
  EXPECT_GE(doc["records"][0]["wall_time_s"].get<double>(), 0.0);
}

TEST(Cli, SeedOverridesConfig) {
  const auto cfg = write_config("seed.json", R"({"u": 0.5, "length": 3, "samples": 500, "seed": 4})");
  const CliRun a = run("--config " + cfg.string() + " --format json rice-check");
  const CliRun b = run("--config " + cfg.string() + " --seed 9 --format json rice-check");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(nlohmann::json::parse(a.out)["records"][0]["seed"], 4);
  EXPECT_EQ(nlohmann::json::parse(b.out)["records"][0]["seed"], 9);
}

TEST(Cli, McValidateAgrees) {
  const auto cfg = write_config("mc.json", R"({"engine": "capacity2", "u": 1, "l1": 0.5, "l2": 0.5, "samples": 10000})");
  const CliRun r = run("--config " + cfg.string() + " --format json mc-validate");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = nlohmann::json::parse(r.out)["records"][0];
  EXPECT_LE(std::abs(rec["z"].get<double>()), 3.0);
}

TEST(Cli, RiceCheckAgrees) {
  const auto cfg = write_config("rice.json", R"({"u": 1, "length": 20, "angle": 0.7, "samples": 4000})");
  const CliRun r = run("--config " + cfg.string() + " --format json rice-check");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = nlohmann::json::parse(r.out)["records"][0];
  EXPECT_LE(std::abs(rec["z"].get<double>()), 3.0);
}

TEST(Cli, CapacityKRecord) {
  const auto cfg = write_config("k.json", R"({"u": 1, "angles": [0.3], "lengths": [0.000001], "n": 6})");
  const CliRun r = run("--config " + cfg.string() + " --format json capacityk");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = nlohmann::json::parse(r.out)["records"][0];
  EXPECT_NEAR(rec["value"].get<double>(), 0.158655, 1e-5);
  EXPECT_EQ(rec["method"], "growing-circle");
}

TEST(Cli, Version) {
  const CliRun r = run("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0.1.0"), std::string::npos);
}
