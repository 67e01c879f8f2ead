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
// Config-driven batch front end.
//
//   excursion <command> --config run.json [--output PATH] [--format csv|json]
//             [--seed N] [--workers N] [--timing]
//
// Commands: capacity2, capacityk, second-moment, mc-validate, rice-check.
// Exit status: 0 success, 2 configuration error, 3 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "excursion.hpp"

namespace {

using namespace excursion;
using Json = nlohmann::json;
using Record = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
  throw ConfigError("config: key '" + key + "' " + what);
}

const Json& require(const Json& cfg, const std::string& key) {
  if (!cfg.contains(key)) bad_key(key, "is required");
  return cfg.at(key);
}

double as_number(const Json& v, const std::string& key) {
  if (!v.is_number()) bad_key(key, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad_key(key, "must be finite");
  return x;
}

// A scalar or a list of scalars (a sweep axis).
std::vector<double> number_list(const Json& cfg, const std::string& key) {
  const Json& v = require(cfg, key);
  std::vector<double> out;
  if (v.is_array()) {
    if (v.empty()) bad_key(key, "must not be an empty list");
    for (const Json& x : v) out.push_back(as_number(x, key));
  } else {
    out.push_back(as_number(v, key));
  }
  return out;
}

std::vector<double> number_list_or(const Json& cfg, const std::string& key, double fallback) {
  if (!cfg.contains(key)) return {fallback};
  return number_list(cfg, key);
}

double number_or(const Json& cfg, const std::string& key, double fallback) {
  return cfg.contains(key) ? as_number(cfg.at(key), key) : fallback;
}

int int_or(const Json& cfg, const std::string& key, int fallback, int minimum) {
  if (!cfg.contains(key)) return fallback;
  const Json& v = cfg.at(key);
  if (!v.is_number_integer()) bad_key(key, "must be an integer");
  const auto x = v.get<long long>();
  if (x < minimum || x > 1'000'000'000) bad_key(key, "must be an integer >= " + std::to_string(minimum));
  return static_cast<int>(x);
}

bool bool_or(const Json& cfg, const std::string& key, bool fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_boolean()) bad_key(key, "must be true or false");
  return cfg.at(key).get<bool>();
}

std::string string_or(const Json& cfg, const std::string& key, const std::string& fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_string()) bad_key(key, "must be a string");
  return cfg.at(key).get<std::string>();
}

CorrelationModel parse_model(const Json& cfg) {
  if (!cfg.contains("model")) return CorrelationModel::gaussian();
  const Json& m = cfg.at("model");
  const std::string type = m.is_string() ? m.get<std::string>() : string_or(m, "type", "");
  const Json params = m.is_object() ? m : Json::object();
  try {
    if (type == "gaussian") return CorrelationModel::gaussian();
    if (type == "scaled_gaussian") return CorrelationModel::scaled_gaussian(as_number(require(params, "length"), "length"));
    if (type == "anisotropic_gaussian")
      return CorrelationModel::anisotropic_gaussian(as_number(require(params, "a11"), "a11"),
                                                    as_number(require(params, "a12"), "a12"),
                                                    as_number(require(params, "a22"), "a22"));
    if (type == "cauchy")
      return CorrelationModel::cauchy(as_number(require(params, "length"), "length"),
                                      as_number(require(params, "beta"), "beta"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: key 'model': ") + e.what());
  }
  bad_key("model", "has unknown type '" + type + "'");
}

MvnOptions parse_tolerance(const Json& cfg, std::uint64_t seed) {
  MvnOptions o;
  o.seed = seed;
  if (!cfg.contains("tolerance")) return o;
  const Json& t = cfg.at("tolerance");
  if (!t.is_object()) bad_key("tolerance", "must be an object");
  o.rel_tol = number_or(t, "rel_tol", o.rel_tol);
  o.abs_tol = number_or(t, "abs_tol", o.abs_tol);
  if (!(o.rel_tol > 0.0) || !(o.abs_tol > 0.0)) bad_key("tolerance", "entries must be positive");
  o.max_points = int_or(t, "max_points", o.max_points, 16);
  o.randomizations = int_or(t, "randomizations", o.randomizations, 2);
  return o;
}

Window parse_window(const Json& cfg, const std::string& key) {
  const Json& w = require(cfg, key);
  try {
    if (w.contains("disc")) {
      const Json& d = w.at("disc");
      const Json& c = require(d, "center");
      if (!c.is_array() || c.size() != 2) bad_key(key, "disc center must be [x, y]");
      return Window::disc(Vec2(as_number(c[0], key), as_number(c[1], key)), as_number(require(d, "radius"), "radius"));
    }
    if (w.contains("rectangle")) {
      const Json& r = w.at("rectangle");
      const Json& lo = require(r, "lo");
      const Json& hi = require(r, "hi");
      if (!lo.is_array() || lo.size() != 2 || !hi.is_array() || hi.size() != 2)
        bad_key(key, "rectangle corners must be [x, y]");
      return Window::rectangle(Vec2(as_number(lo[0], key), as_number(lo[1], key)),
                               Vec2(as_number(hi[0], key), as_number(hi[1], key)));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: key '" + key + "': " + e.what());
  }
  bad_key(key, "must contain 'disc' or 'rectangle'");
}

std::string describe(const Window& w) {
  std::ostringstream os;
  os.precision(15);
  if (w.is_disc()) {
    os << "disc(" << w.as_disc().center(0) << "," << w.as_disc().center(1) << "," << w.as_disc().radius << ")";
  } else {
    os << "rectangle(" << w.as_rect().lo(0) << "," << w.as_rect().lo(1) << "," << w.as_rect().hi(0) << ","
       << w.as_rect().hi(1) << ")";
  }
  return os.str();
}

std::string join(const std::vector<double>& xs) {
  std::ostringstream os;
  os.precision(15);
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? ";" : "") << xs[i];
  return os.str();
}

struct RunContext {
  Json cfg;
  std::uint64_t seed = 1;
  bool timing = false;
  std::vector<Record> records;
};

using Clock = std::chrono::steady_clock;

void finish(RunContext& ctx, Record rec, Clock::time_point start) {
  const double wall = std::chrono::duration<double>(Clock::now() - start).count();
  rec["seed"] = ctx.seed;
  rec["version"] = kVersion;
  if (ctx.timing) rec["wall_time_s"] = wall;
  std::cerr << "excursion: " << rec.at("command").get<std::string>() << " record " << ctx.records.size() + 1
            << " done in " << wall << " s\n";
  ctx.records.push_back(std::move(rec));
}

// ---- capacity2 ----

struct Capacity2Job {
  TwoSegmentProblem problem;
  Capacity2Options opts;
};

std::vector<Capacity2Job> capacity2_jobs(const RunContext& ctx) {
  const Json& cfg = ctx.cfg;
  const auto us = number_list(cfg, "u");
  const auto l1s = number_list(cfg, "l1");
  const auto l2s = number_list(cfg, "l2");
  const auto phis = number_list_or(cfg, "phi_tilde", std::numbers::pi / 4);
  const CorrelationModel model = parse_model(cfg);
  Capacity2Options opts;
  opts.m = int_or(cfg, "m", opts.m, 2);
  opts.theta_order = int_or(cfg, "theta_order", opts.theta_order, 2);
  opts.refine = bool_or(cfg, "refine", opts.refine);
  const std::string route = string_or(cfg, "route", "automatic");
  if (route == "automatic") opts.route = CapacityRoute::automatic;
  else if (route == "shorter_first") opts.route = CapacityRoute::shorter_first;
  else if (route == "longer_first") opts.route = CapacityRoute::longer_first;
  else bad_key("route", "must be automatic, shorter_first or longer_first");
  const std::string y = string_or(cfg, "y_integration", "joint_qmc");
  if (y == "joint_qmc") opts.cond.method = YIntegration::joint_qmc;
  else if (y == "hermite") opts.cond.method = YIntegration::hermite;
  else bad_key("y_integration", "must be joint_qmc or hermite");
  opts.cond.hermite_order = int_or(cfg, "hermite_order", opts.cond.hermite_order, 2);
  opts.cond.mvn = parse_tolerance(cfg, ctx.seed);
  std::vector<Capacity2Job> jobs;
  for (double u : us)
    for (double l1 : l1s)
      for (double l2 : l2s)
        for (double phi : phis) {
          Capacity2Job job{TwoSegmentProblem{u, l1, l2, phi, model}, opts};
          try {
            job.problem.validate();
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what() + " (keys 'u', 'l1', 'l2', 'phi_tilde')");
          }
          jobs.push_back(std::move(job));
        }
  return jobs;
}

Record capacity2_record(const Capacity2Job& job, const CapacityEstimate& est) {
  Record r;
  r["command"] = "capacity2";
  r["model"] = job.problem.model.descriptor();
  r["u"] = job.problem.u;
  r["l1"] = job.problem.l1;
  r["l2"] = job.problem.l2;
  r["phi_tilde"] = job.problem.phi_tilde;
  r["m"] = job.opts.m;
  r["theta_order"] = job.opts.theta_order;
  r["value"] = est.value;
  r["abs_error"] = est.abs_error;
  r["method"] = est.method;
  r["theta_error"] = est.theta_error;
  r["grid_change"] = est.grid_change;
  r["sampling_error"] = est.sampling_error;
  r["clamp_warning"] = est.clamp_warning;
  return r;
}

void run_capacity2(RunContext& ctx) {
  for (const auto& job : capacity2_jobs(ctx)) {
    const auto start = Clock::now();
    finish(ctx, capacity2_record(job, capacity_two_segments(job.problem, job.opts)), start);
  }
}

// ---- capacityk ----

struct CapacityKJob {
  KSegmentProblem problem;
  CapacityKOptions opts;
};

std::vector<CapacityKJob> capacityk_jobs(const RunContext& ctx) {
  const Json& cfg = ctx.cfg;
  const auto us = number_list(cfg, "u");
  const Json& angles_json = require(cfg, "angles");
  if (!angles_json.is_array() || angles_json.empty()) bad_key("angles", "must be a nonempty list");
  std::vector<double> angles;
  for (const Json& a : angles_json) angles.push_back(as_number(a, "angles"));
  const Json& lj = require(cfg, "lengths");
  if (!lj.is_array() || lj.empty()) bad_key("lengths", "must be a list (or a list of lists)");
  std::vector<std::vector<double>> length_sets;
  if (lj.front().is_array()) {
    for (const Json& set : lj) {
      if (!set.is_array()) bad_key("lengths", "must not mix numbers and lists");
      std::vector<double> ls;
      for (const Json& x : set) ls.push_back(as_number(x, "lengths"));
      length_sets.push_back(std::move(ls));
    }
  } else {
    std::vector<double> ls;
    for (const Json& x : lj) ls.push_back(as_number(x, "lengths"));
    length_sets.push_back(std::move(ls));
  }
  const CorrelationModel model = parse_model(cfg);
  CapacityKOptions opts;
  opts.n = int_or(cfg, "n", opts.n, 2);
  opts.t_order = int_or(cfg, "t_order", opts.t_order, 2);
  opts.refine = bool_or(cfg, "refine", opts.refine);
  opts.cond.mvn = parse_tolerance(cfg, ctx.seed);
  std::vector<CapacityKJob> jobs;
  for (double u : us)
    for (const auto& ls : length_sets) {
      if (ls.size() != angles.size()) bad_key("lengths", "must have one entry per angle");
      CapacityKJob job{KSegmentProblem{u, angles, ls, model}, opts};
      try {
        job.problem.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what() + " (keys 'u', 'angles', 'lengths')");
      }
      if (static_cast<std::size_t>(opts.n) * ls.size() + 2 > kMvnMaxDimension) bad_key("n", "times k exceeds the cdf dimension cap");
      jobs.push_back(std::move(job));
    }
  return jobs;
}

Record capacityk_record(const CapacityKJob& job, const SurvivalEstimate& est) {
  Record r;
  r["command"] = "capacityk";
  r["model"] = job.problem.model.descriptor();
  r["u"] = job.problem.u;
  r["angles"] = join(job.problem.angles);
  r["lengths"] = join(job.problem.lengths);
  r["n"] = job.opts.n;
  r["t_order"] = job.opts.t_order;
  r["survival"] = est.survival;
  r["value"] = est.capacity;
  r["abs_error"] = est.abs_error;
  r["method"] = est.method;
  r["t_error"] = est.t_error;
  r["grid_change"] = est.grid_change;
  r["sampling_error"] = est.sampling_error;
  r["clamp_warning"] = est.clamp_warning;
  return r;
}

void run_capacityk(RunContext& ctx) {
  for (const auto& job : capacityk_jobs(ctx)) {
    const auto start = Clock::now();
    finish(ctx, capacityk_record(job, joint_survival_k(job.problem, job.opts)), start);
  }
}

// ---- second-moment ----

void run_second_moment(RunContext& ctx) {
  const Json& cfg = ctx.cfg;
  const auto us = number_list(cfg, "u");
  const Window b1 = parse_window(cfg, "window1");
  const Window b2 = parse_window(cfg, "window2");
  const CorrelationModel model = parse_model(cfg);
  SecondMomentOptions opts;
  opts.pairs = static_cast<std::size_t>(int_or(cfg, "pairs", static_cast<int>(opts.pairs), 100));
  opts.quad.angular_order = int_or(cfg, "angular_order", opts.quad.angular_order, 2);
  opts.quad.radial_order = int_or(cfg, "radial_order", opts.quad.radial_order, 2);
  opts.dependence = bool_or(cfg, "dependence", false);
  opts.seed = ctx.seed;
  for (double u : us) {
    const auto start = Clock::now();
    const SecondMomentResult res = second_moment_measure(model, u, b1, b2, opts);
    Record r;
    r["command"] = "second-moment";
    r["model"] = model.descriptor();
    r["u"] = u;
    r["window1"] = describe(b1);
    r["window2"] = describe(b2);
    r["pairs"] = res.pairs;
    r["angular_order"] = opts.quad.angular_order;
    r["radial_order"] = opts.quad.radial_order;
    r["value"] = res.mu2.value;
    r["abs_error"] = res.mu2.abs_error;
    r["method"] = res.mu2.method;
    r["factorized"] = res.factorized.value;
    r["dependence"] = res.dependence.value;
    r["dependence_error"] = res.dependence.abs_error;
    r["rejected_pairs"] = res.rejected;
    r["evaluations"] = res.evaluations;
    finish(ctx, std::move(r), start);
  }
}

// ---- mc-validate ----

void add_mc(Record& r, const McEstimate& mc, double value, double abs_error) {
  r["mc_value"] = mc.value;
  r["mc_standard_error"] = mc.standard_error;
  r["mc_samples"] = mc.samples;
  r["mc_step"] = mc.step;
  r["mc_bias_probe"] = mc.bias_probe;
  const double scale = std::sqrt(mc.standard_error * mc.standard_error + std::pow(abs_error / 3.0, 2));
  r["z"] = scale > 0.0 ? (value - mc.value) / scale : 0.0;
}

void run_mc_validate(RunContext& ctx) {
  const Json& cfg = ctx.cfg;
  const std::string engine = string_or(cfg, "engine", "capacity2");
  const int samples = int_or(cfg, "samples", 20000, 2);
  const double step = number_or(cfg, "step", 0.01);
  if (!(step > 0.0) || step > 0.02) bad_key("step", "must lie in (0, 0.02]");
  if (engine == "capacity2") {
    for (const auto& job : capacity2_jobs(ctx)) {
      const auto start = Clock::now();
      const CapacityEstimate est = capacity_two_segments(job.problem, job.opts);
      const McEstimate mc = empirical_capacity(job.problem, step, static_cast<std::size_t>(samples), ctx.seed);
      Record r = capacity2_record(job, est);
      r["command"] = "mc-validate";
      r["engine"] = "capacity2";
      add_mc(r, mc, est.value, est.abs_error);
      finish(ctx, std::move(r), start);
    }
  } else if (engine == "capacityk") {
    for (const auto& job : capacityk_jobs(ctx)) {
      const auto start = Clock::now();
      const SurvivalEstimate est = joint_survival_k(job.problem, job.opts);
      const McEstimate mc = empirical_capacity(job.problem, step, static_cast<std::size_t>(samples), ctx.seed);
      Record r = capacityk_record(job, est);
      r["command"] = "mc-validate";
      r["engine"] = "capacityk";
      add_mc(r, mc, est.capacity, est.abs_error);
      finish(ctx, std::move(r), start);
    }
  } else {
    bad_key("engine", "must be capacity2 or capacityk");
  }
}

// ---- rice-check ----

void run_rice_check(RunContext& ctx) {
  const Json& cfg = ctx.cfg;
  const auto us = number_list(cfg, "u");
  const CorrelationModel model = parse_model(cfg);
  const double length = number_or(cfg, "length", 20.0);
  const double angle = number_or(cfg, "angle", 0.0);
  const double step = number_or(cfg, "step", 0.01);
  const int samples = int_or(cfg, "samples", 10000, 2);
  if (!(length > 0.0)) bad_key("length", "must be positive");
  if (!(step > 0.0) || step > 0.02) bad_key("step", "must lie in (0, 0.02]");
  if (length / step + 1.0 > static_cast<double>(kMaxSimulationPoints)) bad_key("length", "over step exceeds the point budget");
  const Vec2 v(std::cos(angle), std::sin(angle));
  for (double u : us) {
    const auto start = Clock::now();
    const McEstimate mc =
        empirical_crossing_rate(model, u, Vec2::Zero(), length * v, step, static_cast<std::size_t>(samples), ctx.seed);
    const double rice = std::sqrt(directional_deriv_variance(model, v)) * std::exp(-0.5 * u * u) / std::numbers::pi;
    Record r;
    r["command"] = "rice-check";
    r["model"] = model.descriptor();
    r["u"] = u;
    r["length"] = length;
    r["angle"] = angle;
    r["step"] = step;
    r["samples"] = samples;
    r["value"] = mc.value;
    r["abs_error"] = mc.abs_error;
    r["method"] = mc.method;
    r["rice"] = rice;
    r["discrepancy"] = mc.value - rice;
    r["z"] = mc.standard_error > 0.0 ? (mc.value - rice) / mc.standard_error : 0.0;
    finish(ctx, std::move(r), start);
  }
}

std::string csv_cell(const Record& v) {
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v.get<double>());
    return buf;
  }
  return v.dump();
}

std::string render(const std::vector<Record>& records, const std::string& format) {
  if (format == "json") {
    Record doc;
    doc["version"] = kVersion;
    doc["records"] = records;
    return doc.dump(2) + "\n";
  }
  std::string out;
  if (records.empty()) return out;
  bool first = true;
  for (const auto& [key, value] : records.front().items()) {
    out += (first ? "" : ",") + key;
    first = false;
  }
  out += "\n";
  for (const Record& r : records) {
    first = true;
    for (const auto& [key, value] : r.items()) {
      out += (first ? "" : ",") + csv_cell(value);
      first = false;
    }
    out += "\n";
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacity functionals and boundary-length moments of Gaussian excursion sets"};
  app.set_version_flag("--version", std::string(kVersion));
  std::string config_path;
  std::string output;
  std::string format = "csv";
  std::uint64_t seed = 0;
  int workers = 0;
  bool timing = false;
  auto* seed_opt = app.add_option("--seed", seed, "Global seed (overrides the config)");
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--output", output, "Output file (default: stdout)");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--workers", workers, "Worker pool cap (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--timing", timing, "Add wall_time_s to every record (output is then not reproducible)");
  const std::vector<std::pair<std::string, std::string>> commands{
      {"capacity2", "Two segments, sweeping-line method"},
      {"capacityk", "k segments from the origin, growing-circle method"},
      {"second-moment", "Second moment measure of the boundary length"},
      {"mc-validate", "Engine against its Monte Carlo oracle"},
      {"rice-check", "Empirical crossing rate against the Rice formula"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunContext ctx;
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot read '" + config_path + "'");
    try {
      ctx.cfg = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (!ctx.cfg.is_object()) throw ConfigError("config: top level must be an object");
    if (ctx.cfg.contains("command") && ctx.cfg.at("command") != command)
      bad_key("command", "does not match the subcommand '" + command + "'");
    ctx.seed = 1;
    if (ctx.cfg.contains("seed")) {
      if (!ctx.cfg.at("seed").is_number_unsigned()) bad_key("seed", "must be a nonnegative integer");
      ctx.seed = ctx.cfg.at("seed").get<std::uint64_t>();
    }
    if (*seed_opt) ctx.seed = seed;
    ctx.timing = timing;
    parallel::set_workers(workers);

    if (command == "capacity2") run_capacity2(ctx);
    else if (command == "capacityk") run_capacityk(ctx);
    else if (command == "second-moment") run_second_moment(ctx);
    else if (command == "mc-validate") run_mc_validate(ctx);
    else run_rice_check(ctx);

    const std::string text = render(ctx.records, format);
    if (output.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(output, std::ios::binary);
      if (!out) throw ConfigError("cannot open output '" + output + "'");
      out << text;
    }
  } catch (const ConfigError& e) {
    std::cerr << "excursion: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "excursion: config: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "excursion: invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "excursion: numerical failure in " << command << ": " << e.what() << "\n";
    return 3;
  }
  return 0;
}
