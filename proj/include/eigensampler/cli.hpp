#pragma once

// Command-line front end: strict JSON experiment configs, the solve / oracle /
// validate / sweep subcommands and their result files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eigensampler/analysis.hpp"
#include "eigensampler/engine.hpp"
#include "eigensampler/error.hpp"
#include "eigensampler/excited.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/parallel.hpp"
#include "eigensampler/validation.hpp"

namespace eigensampler::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSiteOrder = "big-endian: site 0 is the most significant bit of a basis index";
inline constexpr const char* kSeedDerivation =
    "member seed = derive(seed, member); level seed = derive(member seed, level); derive = splitmix64 mix";

enum ExitCode : int { kOk = 0, kRuntime = 1, kConfig = 2, kBoundViolation = 3 };

/// "tfim": -J sum ZZ - B sum X. "xxzz": the same plus -K sum XX.
struct ModelConfig {
  std::string type = "tfim";
  int sites = 4;
  double coupling = 1.0;
  double field = 0.5;
  bool periodic = true;
  std::optional<double> xx_coupling;
};

struct OutputConfig {
  std::string directory = "results";
  std::vector<std::string> formats{"json", "csv"};

  [[nodiscard]] bool wants(const std::string& f) const {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  }
};

struct OracleConfig {
  std::size_t levels = 6;
  double degeneracy_tol = 1e-8;
  double cluster_tol = 1e-3;
};

struct SweepConfig {
  std::vector<double> eta;
  std::vector<std::size_t> steps;
  std::vector<double> p_lift;
  std::vector<int> sites;
  std::optional<double> fixed_time;
  std::optional<std::size_t> level;
  std::size_t max_points = 256;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t ensemble = 16;
  std::size_t max_restarts = 0;  // default for every MonteCarlo policy in the config
  ModelConfig model;
  SpectrumConfig spectrum;
  OutputConfig output;
  OracleConfig oracle;
  SweepConfig sweep;
};

// ---------------------------------------------------------------------------
// Strict config parsing

namespace detail {

inline void expect_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + path);
  }
}

inline std::string where(const std::string& path, const char* key) { return path + "." + key; }

inline double as_double(const Json& v, const std::string& at) {
  if (!v.is_number()) throw ConfigError(at + " must be a number");
  return v.get<double>();
}

inline std::uint64_t as_unsigned(const Json& v, const std::string& at) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(at + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline int as_int(const Json& v, const std::string& at) {
  if (!v.is_number_integer()) throw ConfigError(at + " must be an integer");
  return v.get<int>();
}

inline bool as_bool(const Json& v, const std::string& at) {
  if (!v.is_boolean()) throw ConfigError(at + " must be true or false");
  return v.get<bool>();
}

inline std::string as_string(const Json& v, const std::string& at) {
  if (!v.is_string()) throw ConfigError(at + " must be a string");
  return v.get<std::string>();
}

template <class T, class F>
std::vector<T> as_list(const Json& v, const std::string& at, F&& item) {
  if (!v.is_array()) throw ConfigError(at + " must be a list");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], at + "[" + std::to_string(i) + "]"));
  return out;
}

inline Policy parse_policy(const std::string& name, std::size_t max_restarts, const std::string& at) {
  if (name == "forced") return ForcedPolicy{};
  if (name == "montecarlo") return MonteCarloPolicy{max_restarts};
  throw ConfigError(at + " must be 'forced' or 'montecarlo'");
}

inline std::string policy_name(const Policy& p) {
  return std::holds_alternative<ForcedPolicy>(p) ? "forced" : "montecarlo";
}

inline std::string method_name(FilterMethod m) {
  return m == FilterMethod::ExactExponential ? "exact_exponential" : "state_based";
}

inline void parse_model(const Json& j, ModelConfig& m) {
  const std::string p = "model";
  expect_keys(j, p, {"type", "L", "J", "B", "K", "periodic"});
  if (j.contains("type")) m.type = as_string(j["type"], where(p, "type"));
  if (j.contains("L")) m.sites = as_int(j["L"], where(p, "L"));
  if (j.contains("J")) m.coupling = as_double(j["J"], where(p, "J"));
  if (j.contains("B")) m.field = as_double(j["B"], where(p, "B"));
  if (j.contains("periodic")) m.periodic = as_bool(j["periodic"], where(p, "periodic"));
  const bool has_k = j.contains("K") && !j["K"].is_null();
  if (m.type == "tfim") {
    if (has_k) throw ConfigError("model.K only applies to type 'xxzz'");
  } else if (m.type == "xxzz") {
    if (!has_k) throw ConfigError("model type 'xxzz' needs K");
    m.xx_coupling = as_double(j["K"], where(p, "K"));
  } else {
    throw ConfigError("model.type must be 'tfim' or 'xxzz'");
  }
}

inline void parse_run(const Json& j, ExperimentConfig& c) {
  const std::string p = "run";
  expect_keys(j, p,
              {"eta", "steps", "policy", "max_restarts", "representation", "seed", "record_every", "ensemble_size"});
  RunConfig& r = c.spectrum.run;
  if (j.contains("eta")) r.eta = as_double(j["eta"], where(p, "eta"));
  if (j.contains("steps")) r.steps = as_unsigned(j["steps"], where(p, "steps"));
  if (j.contains("max_restarts")) c.max_restarts = as_unsigned(j["max_restarts"], where(p, "max_restarts"));
  if (j.contains("policy"))
    r.policy = parse_policy(as_string(j["policy"], where(p, "policy")), c.max_restarts, where(p, "policy"));
  if (j.contains("representation")) {
    const std::string rep = as_string(j["representation"], where(p, "representation"));
    if (rep == "pure") r.representation = Representation::Pure;
    else if (rep == "mixed") r.representation = Representation::Mixed;
    else throw ConfigError("run.representation must be 'pure' or 'mixed'");
  }
  if (j.contains("record_every")) r.record_every = as_unsigned(j["record_every"], where(p, "record_every"));
  if (j.contains("seed")) c.seed = r.seed = as_unsigned(j["seed"], where(p, "seed"));
  if (j.contains("ensemble_size")) c.ensemble = as_unsigned(j["ensemble_size"], where(p, "ensemble_size"));
}

inline void parse_excited(const Json& j, ExperimentConfig& c) {
  const std::string p = "excited";
  expect_keys(j, p, {"levels", "period", "p_lift", "method", "init", "per_level"});
  SpectrumConfig& s = c.spectrum;
  if (j.contains("levels")) s.levels = as_unsigned(j["levels"], where(p, "levels"));
  // p_lift selects the stochastic schedule, period the deterministic one.
  if (j.contains("p_lift") && j.contains("period")) throw ConfigError("excited: give either p_lift or period, not both");
  if (j.contains("p_lift")) s.schedule = StochasticLift{as_double(j["p_lift"], where(p, "p_lift"))};
  else if (j.contains("period")) s.schedule = DeterministicLift{as_unsigned(j["period"], where(p, "period"))};
  if (j.contains("method")) {
    const std::string m = as_string(j["method"], where(p, "method"));
    if (m == "exact_exponential") s.method = FilterMethod::ExactExponential;
    else if (m == "state_based") s.method = FilterMethod::StateBased;
    else throw ConfigError("excited.method must be 'exact_exponential' or 'state_based'");
  }
  if (j.contains("init")) s.init = as_string(j["init"], where(p, "init"));
  if (j.contains("per_level")) {
    const std::size_t restarts = c.max_restarts;
    s.per_level = as_list<LevelOverride>(j["per_level"], where(p, "per_level"), [&](const Json& v, const std::string& at) {
      expect_keys(v, at, {"init", "eta", "steps", "policy", "max_restarts"});
      LevelOverride o;
      if (v.contains("init") && !v["init"].is_null()) o.init = as_string(v["init"], where(at, "init"));
      if (v.contains("eta") && !v["eta"].is_null()) o.eta = as_double(v["eta"], where(at, "eta"));
      if (v.contains("steps") && !v["steps"].is_null()) o.steps = as_unsigned(v["steps"], where(at, "steps"));
      std::size_t r = restarts;
      if (v.contains("max_restarts")) r = as_unsigned(v["max_restarts"], where(at, "max_restarts"));
      if (v.contains("policy") && !v["policy"].is_null())
        o.policy = parse_policy(as_string(v["policy"], where(at, "policy")), r, where(at, "policy"));
      return o;
    });
  }
}

inline void parse_output(const Json& j, OutputConfig& o) {
  expect_keys(j, "output", {"directory", "formats"});
  if (j.contains("directory")) o.directory = as_string(j["directory"], "output.directory");
  if (j.contains("formats"))
    o.formats = as_list<std::string>(j["formats"], "output.formats",
                                     [](const Json& v, const std::string& at) { return as_string(v, at); });
}

inline void parse_oracle(const Json& j, OracleConfig& o) {
  expect_keys(j, "oracle", {"levels", "degeneracy_tol", "cluster_tol"});
  if (j.contains("levels")) o.levels = as_unsigned(j["levels"], "oracle.levels");
  if (j.contains("degeneracy_tol")) o.degeneracy_tol = as_double(j["degeneracy_tol"], "oracle.degeneracy_tol");
  if (j.contains("cluster_tol")) o.cluster_tol = as_double(j["cluster_tol"], "oracle.cluster_tol");
}

inline void parse_sweep(const Json& j, SweepConfig& s) {
  const std::string p = "sweep";
  expect_keys(j, p, {"eta", "steps", "p_lift", "L", "fixed_time", "level", "max_points"});
  auto dbl = [](const Json& v, const std::string& at) { return as_double(v, at); };
  if (j.contains("eta")) s.eta = as_list<double>(j["eta"], where(p, "eta"), dbl);
  if (j.contains("p_lift")) s.p_lift = as_list<double>(j["p_lift"], where(p, "p_lift"), dbl);
  if (j.contains("steps"))
    s.steps = as_list<std::size_t>(j["steps"], where(p, "steps"),
                                   [](const Json& v, const std::string& at) { return as_unsigned(v, at); });
  if (j.contains("L"))
    s.sites = as_list<int>(j["L"], where(p, "L"), [](const Json& v, const std::string& at) { return as_int(v, at); });
  if (j.contains("fixed_time") && !j["fixed_time"].is_null()) s.fixed_time = as_double(j["fixed_time"], where(p, "fixed_time"));
  if (j.contains("level") && !j["level"].is_null()) s.level = as_unsigned(j["level"], where(p, "level"));
  if (j.contains("max_points")) s.max_points = as_unsigned(j["max_points"], where(p, "max_points"));
}

}  // namespace detail

/// Semantic checks shared by every subcommand.
inline void validate_config(const ExperimentConfig& c) {
  if (c.model.sites < 2 || c.model.sites > kMaxStateQubits)
    throw ConfigError("model.L must lie in 2.." + std::to_string(kMaxStateQubits));
  const RunConfig& r = c.spectrum.run;
  if (!(r.eta >= 0.0 && r.eta < 1.0)) throw ConfigError("run.eta must lie in [0, 1)");
  if (r.steps < 1) throw ConfigError("run.steps must be at least 1");
  if (r.record_every < 1) throw ConfigError("run.record_every must be at least 1");
  if (c.ensemble < 1) throw ConfigError("run.ensemble_size must be at least 1");
  if (c.spectrum.levels < 1) throw ConfigError("excited.levels must be at least 1");
  if (const auto* d = std::get_if<DeterministicLift>(&c.spectrum.schedule); d && d->period < 1)
    throw ConfigError("excited.period must be at least 1");
  if (const auto* s = std::get_if<StochasticLift>(&c.spectrum.schedule); s && !(s->p_lift > 0.0))
    throw ConfigError("excited.p_lift must be positive");
  if (c.spectrum.per_level.size() > c.spectrum.levels)
    throw ConfigError("excited.per_level has more entries than excited.levels");
  for (std::size_t k = 0; k < c.spectrum.levels; ++k) {
    try {
      parse_initial_state(c.spectrum.level_init(k), c.model.sites);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("excited init: ") + e.what());
    }
    const RunConfig lr = c.spectrum.level_run(k);
    if (!(lr.eta >= 0.0 && lr.eta < 1.0)) throw ConfigError("per-level eta must lie in [0, 1)");
    if (lr.steps < 1) throw ConfigError("per-level steps must be at least 1");
  }
  if (c.spectrum.method == FilterMethod::StateBased && r.representation != Representation::Mixed &&
      c.spectrum.levels > 1)
    throw ConfigError("excited.method 'state_based' needs run.representation 'mixed'");
  if (r.representation == Representation::Mixed && c.model.sites > kMaxDenseQubits)
    throw ConfigError("mixed representation supports at most 12 sites");
  if (c.output.formats.empty()) throw ConfigError("output.formats must not be empty");
  for (const auto& f : c.output.formats)
    if (f != "json" && f != "csv") throw ConfigError("output.formats entries must be 'json' or 'csv'");
  if (c.oracle.levels < 1) throw ConfigError("oracle.levels must be at least 1");
  if (c.sweep.max_points < 1) throw ConfigError("sweep.max_points must be at least 1");
}

inline ExperimentConfig parse_config(const Json& j) {
  detail::expect_keys(j, "config", {"schema_version", "model", "run", "excited", "output", "oracle", "sweep"});
  if (!j.contains("schema_version")) throw ConfigError("config.schema_version is required");
  if (detail::as_int(j["schema_version"], "config.schema_version") != kSchemaVersion)
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  ExperimentConfig c;
  if (j.contains("model")) detail::parse_model(j["model"], c.model);
  if (j.contains("run")) detail::parse_run(j["run"], c);
  if (j.contains("excited")) detail::parse_excited(j["excited"], c);
  if (j.contains("output")) detail::parse_output(j["output"], c.output);
  if (j.contains("oracle")) detail::parse_oracle(j["oracle"], c.oracle);
  if (j.contains("sweep")) detail::parse_sweep(j["sweep"], c.sweep);
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Every field with its effective value; parse_config(resolved(c)) == c.
inline Json resolved(const ExperimentConfig& c) {
  const RunConfig& r = c.spectrum.run;
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = {{"type", c.model.type}, {"L", c.model.sites},        {"J", c.model.coupling},
                {"B", c.model.field},   {"periodic", c.model.periodic}};
  if (c.model.xx_coupling) j["model"]["K"] = *c.model.xx_coupling;
  const std::size_t restarts = c.max_restarts;
  j["run"] = {{"eta", r.eta},
              {"steps", r.steps},
              {"policy", detail::policy_name(r.policy)},
              {"max_restarts", restarts},
              {"representation", r.representation == Representation::Pure ? "pure" : "mixed"},
              {"seed", c.seed},
              {"record_every", r.record_every},
              {"ensemble_size", c.ensemble}};
  Json ex;
  ex["levels"] = c.spectrum.levels;
  if (const auto* d = std::get_if<DeterministicLift>(&c.spectrum.schedule)) {
    ex["period"] = d->period;
  } else {
    ex["p_lift"] = std::get<StochasticLift>(c.spectrum.schedule).p_lift;
  }
  ex["method"] = detail::method_name(c.spectrum.method);
  ex["init"] = c.spectrum.init;
  Json levels = Json::array();
  for (const auto& o : c.spectrum.per_level) {
    Json lj;
    lj["init"] = o.init ? Json(*o.init) : Json(nullptr);
    lj["eta"] = o.eta ? Json(*o.eta) : Json(nullptr);
    lj["steps"] = o.steps ? Json(*o.steps) : Json(nullptr);
    lj["policy"] = o.policy ? Json(detail::policy_name(*o.policy)) : Json(nullptr);
    std::size_t lr = restarts;
    if (o.policy)
      if (const auto* mc = std::get_if<MonteCarloPolicy>(&*o.policy)) lr = mc->max_restarts;
    lj["max_restarts"] = lr;
    levels.push_back(lj);
  }
  ex["per_level"] = levels;
  j["excited"] = ex;
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  j["oracle"] = {{"levels", c.oracle.levels},
                 {"degeneracy_tol", c.oracle.degeneracy_tol},
                 {"cluster_tol", c.oracle.cluster_tol}};
  j["sweep"] = {{"eta", c.sweep.eta},
                {"steps", c.sweep.steps},
                {"p_lift", c.sweep.p_lift},
                {"L", c.sweep.sites},
                {"fixed_time", c.sweep.fixed_time ? Json(*c.sweep.fixed_time) : Json(nullptr)},
                {"level", c.sweep.level ? Json(*c.sweep.level) : Json(nullptr)},
                {"max_points", c.sweep.max_points}};
  return j;
}

inline std::vector<HamiltonianTerm> build_model(const ModelConfig& m) {
  return build_tfim(m.sites, m.coupling, m.field, m.periodic, m.xx_coupling);
}

// ---------------------------------------------------------------------------
// Formatting helpers

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

inline std::string trajectory_csv(const TrajectoryRecord& rec, std::uint64_t seed) {
  std::ostringstream os;
  os << "# schema_version=" << kSchemaVersion << "\n# seed=" << seed << "\n";
  os << "step,imaginary_time,projector_id,step_success_prob,energy,fidelity\n";
  for (const auto& r : rec.rows)
    os << r.step << ',' << format_double(r.imaginary_time) << ',' << r.projector_id << ','
       << format_double(r.step_success_prob) << ',' << format_double(r.energy) << ',' << format_double(r.fidelity)
       << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// solve

struct SolveOutcome {
  std::vector<SpectrumResult> members;
  Json summary;
  Json timing;
};

/// Optional dense oracle; none above the dense-matrix cap.
inline std::optional<SpectrumOracle> make_oracle(const ExperimentConfig& c, std::span<const HamiltonianTerm> terms) {
  if (c.model.sites > kMaxDenseQubits) return std::nullopt;
  return SpectrumOracle(hamiltonian_matrix(terms), c.oracle.degeneracy_tol, c.oracle.cluster_tol);
}

inline std::vector<SpectrumResult> run_members(const ExperimentConfig& c, std::span<const HamiltonianTerm> terms,
                                               const SpectrumOracle* oracle) {
  return run_ensemble(c.spectrum.run, c.ensemble, [&](const RunConfig& rc, std::size_t) {
    SpectrumConfig sc = c.spectrum;
    sc.run = rc;
    return solve_spectrum(sc, terms, oracle);
  });
}

inline Json level_json(const LevelResult& l) {
  return {{"level", l.level},
          {"seed", l.seed},
          {"eta", l.eta},
          {"steps", l.steps},
          {"init", l.init},
          {"energy", number_or_null(l.energy)},
          {"exact_energy", number_or_null(l.exact_energy)},
          {"fidelity", number_or_null(l.fidelity)},
          {"cluster_fidelity", number_or_null(l.cluster_fidelity)},
          {"eigenvector_fidelity", number_or_null(l.eigenvector_fidelity)},
          {"log2_success", number_or_null(l.log2_success)},
          {"restarts", l.record.restarts},
          {"lift_below_threshold", l.lift_below_threshold}};
}

inline Json statistics_json(const std::vector<SpectrumResult>& members, std::size_t levels) {
  Json out = Json::array();
  for (std::size_t k = 0; k < levels; ++k) {
    std::vector<double> e, f, cf, vf, ls;
    for (const auto& m : members) {
      const auto& l = m.levels[k];
      e.push_back(l.energy);
      f.push_back(l.fidelity);
      cf.push_back(l.cluster_fidelity);
      vf.push_back(l.eigenvector_fidelity);
      ls.push_back(l.log2_success);
    }
    const double exact = members.front().levels[k].exact_energy;
    const double me = median(e);
    Json s = {{"level", k},
              {"median_energy", number_or_null(me)},
              {"exact_energy", number_or_null(exact)},
              {"median_energy_error", number_or_null(std::abs(me - exact))},
              {"median_fidelity", number_or_null(median(f))},
              {"median_cluster_fidelity", number_or_null(median(cf))},
              {"median_eigenvector_fidelity", number_or_null(median(vf))},
              {"median_log2_success", number_or_null(median(ls))}};
    if (k > 0) {
      std::vector<double> g;
      for (const auto& m : members) g.push_back(m.levels[k].energy - m.levels[k - 1].energy);
      s["median_gap_from_previous"] = number_or_null(median(g));
      if (std::isfinite(exact)) s["exact_gap_from_previous"] = exact - members.front().levels[k - 1].exact_energy;
    }
    out.push_back(s);
  }
  return out;
}

/// Runs the ensemble and assembles the summary and timing documents without
/// touching the file system.
inline SolveOutcome solve(const ExperimentConfig& c) {
  validate_config(c);
  const auto terms = build_model(c.model);
  const auto oracle = make_oracle(c, terms);
  const auto start = std::chrono::steady_clock::now();
  SolveOutcome out;
  out.members = run_members(c, terms, oracle ? &*oracle : nullptr);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json members = Json::array();
  Json timing_members = Json::array();
  Json warnings = Json::array();
  for (std::size_t m = 0; m < out.members.size(); ++m) {
    Json levels = Json::array();
    Json times = Json::array();
    for (const auto& l : out.members[m].levels) {
      levels.push_back(level_json(l));
      times.push_back(l.wall_seconds);
      if (l.lift_below_threshold && m == 0)
        warnings.push_back("level " + std::to_string(l.level) + ": filter weight below the lift threshold 1/(2^n-1)");
    }
    members.push_back({{"member", m}, {"seed", derive_stream_seed(c.spectrum.run.seed, m)}, {"levels", levels}});
    timing_members.push_back({{"member", m}, {"level_seconds", times}});
  }

  out.summary["schema_version"] = kSchemaVersion;
  out.summary["command"] = "solve";
  out.summary["resolved_config"] = resolved(c);
  out.summary["seed"] = c.seed;
  out.summary["seed_derivation"] = kSeedDerivation;
  out.summary["site_order"] = kSiteOrder;
  out.summary["ensemble"] = c.ensemble;
  out.summary["oracle_available"] = oracle.has_value();
  out.summary["statistics"] = statistics_json(out.members, c.spectrum.levels);
  out.summary["members"] = members;
  out.summary["warnings"] = warnings;

  out.timing = {{"schema_version", kSchemaVersion},
                {"total_seconds", total},
                {"workers", worker_count()},
                {"members", timing_members}};
  return out;
}

/// The spectrum config's run seed is the experiment seed.
inline ExperimentConfig with_seed(ExperimentConfig c, std::uint64_t seed) {
  c.seed = seed;
  c.spectrum.run.seed = seed;
  return c;
}

inline void write_solve_outputs(const ExperimentConfig& c, const SolveOutcome& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (c.output.wants("json")) write_text(dir / "summary.json", out.summary.dump(2) + "\n");
  if (c.output.wants("csv")) {
    for (std::size_t m = 0; m < out.members.size(); ++m)
      for (const auto& l : out.members[m].levels) {
        char name[64];
        std::snprintf(name, sizeof name, "trajectory_member%02zu_level%zu.csv", m, l.level);
        write_text(dir / name, trajectory_csv(l.record, l.seed));
      }
  }
  write_text(dir / "timing.json", out.timing.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// oracle

inline Json oracle_listing(const ExperimentConfig& c) {
  validate_config(c);
  if (c.model.sites > kMaxDenseQubits) throw DimensionError("oracle: at most 12 sites");
  const auto terms = build_model(c.model);
  const SpectrumOracle oracle(hamiltonian_matrix(terms), c.oracle.degeneracy_tol, c.oracle.cluster_tol);
  const std::size_t k = std::min(c.oracle.levels, oracle.size());
  Json levels = Json::array();
  for (std::size_t i = 0; i < k; ++i)
    levels.push_back({{"level", i},
                      {"energy", oracle.energy(i)},
                      {"degeneracy", oracle.eigenspace(i, c.oracle.degeneracy_tol).cols()}});
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "oracle";
  j["model"] = resolved(c)["model"];
  j["site_order"] = kSiteOrder;
  j["dimension"] = oracle.size();
  j["levels"] = levels;
  return j;
}

// ---------------------------------------------------------------------------
// validate

inline Json validation_json(const std::vector<CheckResult>& results, std::uint64_t seed) {
  Json checks = Json::array();
  bool all = true;
  for (const auto& r : results) {
    Json metrics = Json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = number_or_null(v);
    checks.push_back({{"name", r.name},
                      {"passed", r.passed()},
                      {"instances", r.instances},
                      {"violations", r.violations},
                      {"worst_margin", number_or_null(r.worst_margin)},
                      {"metrics", metrics}});
    all = all && r.passed();
  }
  return {{"schema_version", kSchemaVersion}, {"command", "validate"}, {"seed", seed}, {"passed", all}, {"checks", checks}};
}

// ---------------------------------------------------------------------------
// sweep

struct SweepPoint {
  double eta = 0.0;
  std::size_t steps = 0;
  std::optional<double> p_lift;
  int sites = 0;
};

inline std::size_t sweep_level(const ExperimentConfig& c) {
  return c.sweep.level.value_or(c.spectrum.levels - 1);
}

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
  const std::size_t level = sweep_level(c);
  const RunConfig base = c.spectrum.level_run(std::min(level, c.spectrum.levels - 1));
  const std::vector<double> etas = c.sweep.eta.empty() ? std::vector<double>{base.eta} : c.sweep.eta;
  const std::vector<std::size_t> steps = c.sweep.steps.empty() ? std::vector<std::size_t>{base.steps} : c.sweep.steps;
  std::vector<std::optional<double>> lifts;
  if (c.sweep.p_lift.empty()) lifts.push_back(std::nullopt);
  for (double p : c.sweep.p_lift) lifts.emplace_back(p);
  const std::vector<int> sites = c.sweep.sites.empty() ? std::vector<int>{c.model.sites} : c.sweep.sites;

  const std::size_t total = etas.size() * (c.sweep.fixed_time ? 1 : steps.size()) * lifts.size() * sites.size();
  if (total > c.sweep.max_points)
    throw ConfigError("sweep grid has " + std::to_string(total) + " points, above sweep.max_points = " +
                      std::to_string(c.sweep.max_points));
  std::vector<SweepPoint> out;
  for (int l : sites)
    for (const auto& p : lifts)
      for (double eta : etas) {
        if (c.sweep.fixed_time) {
          if (!(eta > 0.0)) throw ConfigError("sweep.fixed_time needs positive eta values");
          out.push_back({eta, static_cast<std::size_t>(std::llround(*c.sweep.fixed_time / eta)), p, l});
        } else {
          for (std::size_t n : steps) out.push_back({eta, n, p, l});
        }
      }
  return out;
}

/// Config of one grid point: the target level gets the point's eta and steps,
/// p_lift switches to the stochastic schedule, and levels above the target are
/// not solved.
inline ExperimentConfig sweep_point_config(const ExperimentConfig& c, const SweepPoint& p) {
  ExperimentConfig pc = c;
  const std::size_t level = sweep_level(c);
  pc.model.sites = p.sites;
  pc.spectrum.levels = level + 1;
  pc.spectrum.per_level.resize(level + 1);
  pc.spectrum.per_level[level].eta = p.eta;
  pc.spectrum.per_level[level].steps = p.steps;
  if (p.p_lift) pc.spectrum.schedule = StochasticLift{*p.p_lift};
  validate_config(pc);
  return pc;
}

/// Leading-order acceptance of the target level with exact found states:
/// Tr(e^{-T rho'} rho0 e^{-T rho'}), divided by 2^{f N} for the state-based
/// filter, where f is the filter fraction.
inline double predicted_acceptance(const ExperimentConfig& c, std::span<const HamiltonianTerm> terms,
                                   const SpectrumOracle& oracle, std::size_t level) {
  if (c.model.sites > 10) return std::numeric_limits<double>::quiet_NaN();
  const SamplingDistribution dist = build_distribution(terms);
  const RunConfig run = c.spectrum.level_run(level);
  const QuantumState init = QuantumState::product(parse_initial_state(c.spectrum.level_init(level), c.model.sites));
  if (level == 0) return estimate_success_rate(dist, init, run.eta, run.steps);
  std::vector<DenseProjector> found;
  for (std::size_t k = 0; k < level; ++k) found.push_back(DenseProjector::from_vector(oracle.eigenvector(k)));
  const DenseProjector blend = blend_projectors(found);
  const double f = filter_fraction(c.spectrum.schedule);
  const ComplexMatrix rho_lifted =
      f >= 1.0 ? blend.matrix() : reconstruct_density(lift_distribution(dist, blend, f / (1.0 - f)));
  const ComplexMatrix e = matrix_exp_hermitian(rho_lifted, -run.eta * static_cast<double>(run.steps));
  const double trace = (e * init.density() * e).trace().real();
  if (c.spectrum.method == FilterMethod::StateBased) return success_rate_excited(f, run.steps, trace);
  return trace;
}

struct SweepRow {
  SweepPoint point;
  std::size_t level = 0;
  double median_fidelity = 0.0;
  double median_energy = 0.0;
  double energy_error = 0.0;
  double empirical_acceptance = 0.0;
  double predicted_acceptance = 0.0;
};

/// MonteCarlo: completed / attempted trajectories at the target level.
/// Forced: mean accumulated success probability.
inline double empirical_acceptance(const std::vector<SpectrumResult>& members, std::size_t level, bool forced) {
  if (forced) {
    double s = 0.0;
    for (const auto& m : members) s += std::exp2(m.levels[level].log2_success);
    return s / static_cast<double>(members.size());
  }
  double attempts = 0.0;
  for (const auto& m : members) attempts += 1.0 + static_cast<double>(m.levels[level].record.restarts);
  return static_cast<double>(members.size()) / attempts;
}

inline std::vector<SweepRow> sweep(const ExperimentConfig& c) {
  validate_config(c);
  const std::size_t level = sweep_level(c);
  std::vector<SweepRow> rows;
  std::map<int, std::pair<std::vector<HamiltonianTerm>, std::optional<SpectrumOracle>>> models;
  for (const SweepPoint& p : sweep_points(c)) {
    const ExperimentConfig pc = sweep_point_config(c, p);
    auto it = models.find(p.sites);
    if (it == models.end()) {
      auto terms = build_model(pc.model);
      auto oracle = make_oracle(pc, terms);
      it = models.emplace(p.sites, std::make_pair(std::move(terms), std::move(oracle))).first;
    }
    const auto& [terms, oracle] = it->second;
    const auto members = run_members(pc, terms, oracle ? &*oracle : nullptr);
    SweepRow row;
    row.point = p;
    row.level = level;
    std::vector<double> f, e;
    for (const auto& m : members) {
      f.push_back(m.levels[level].fidelity);
      e.push_back(m.levels[level].energy);
    }
    row.median_fidelity = median(f);
    row.median_energy = median(e);
    row.energy_error = oracle ? std::abs(row.median_energy - oracle->energy(level)) : std::numeric_limits<double>::quiet_NaN();
    row.empirical_acceptance = empirical_acceptance(members, level, pc.spectrum.level_run(level).forced());
    row.predicted_acceptance =
        oracle ? predicted_acceptance(pc, terms, *oracle, level) : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, std::uint64_t seed) {
  std::ostringstream os;
  os << "# schema_version=" << kSchemaVersion << "\n# seed=" << seed << "\n";
  os << "L,eta,steps,p_lift,level,median_fidelity,median_energy,energy_error,empirical_acceptance,"
        "predicted_acceptance\n";
  for (const auto& r : rows)
    os << r.point.sites << ',' << format_double(r.point.eta) << ',' << r.point.steps << ','
       << (r.point.p_lift ? format_double(*r.point.p_lift) : std::string("nan")) << ',' << r.level << ','
       << format_double(r.median_fidelity) << ',' << format_double(r.median_energy) << ','
       << format_double(r.energy_error) << ',' << format_double(r.empirical_acceptance) << ','
       << format_double(r.predicted_acceptance) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Entry point

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> ensemble;
  std::vector<std::string> only;
};

inline ExperimentConfig apply_flags(ExperimentConfig c, const CommonFlags& f) {
  if (f.seed) c = with_seed(std::move(c), *f.seed);
  else c = with_seed(std::move(c), c.seed);
  if (f.ensemble) c.ensemble = *f.ensemble;
  if (f.out) c.output.directory = *f.out;
  validate_config(c);
  return c;
}

inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sampled imaginary-time eigensolver for decomposable Hamiltonians"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto add_common = [&](CLI::App* sub, bool with_config_required) {
    auto* opt = sub->add_option("--config", flags.config, "Experiment config (JSON)");
    if (with_config_required) opt->required();
    sub->add_option("--seed", flags.seed, "Base seed (overrides the config)");
    sub->add_option("--out", flags.out, "Output directory (overrides output.directory)");
  };

  auto* solve_cmd = app.add_subcommand("solve", "Solve the configured spectrum over a seed ensemble");
  add_common(solve_cmd, true);
  solve_cmd->add_option("--ensemble", flags.ensemble, "Number of seeds");

  auto* oracle_cmd = app.add_subcommand("oracle", "Exact spectrum of the configured model");
  add_common(oracle_cmd, true);

  auto* validate_cmd = app.add_subcommand("validate", "Circuit, protocol and error-bound check suites");
  validate_cmd->add_option("--seed", flags.seed, "Seed of the randomized checks");
  validate_cmd->add_option("--out", flags.out, "Directory for validation.json");
  validate_cmd->add_option("--only", flags.only, "Comma-separated check sets: circuits, protocol, appendix-a, "
                                                 "appendix-b, success-rate")
      ->delimiter(',');

  auto* sweep_cmd = app.add_subcommand("sweep", "Grid of solves over eta, steps, p_lift and sites");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--ensemble", flags.ensemble, "Number of seeds per grid point");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (validate_cmd->parsed()) {
      ValidationOptions opt;
      if (flags.seed) opt.seed = *flags.seed;
      const auto results = run_validation(opt, flags.only);
      const Json report = validation_json(results, opt.seed);
      if (flags.out) {
        std::filesystem::create_directories(*flags.out);
        write_text(std::filesystem::path(*flags.out) / "validation.json", report.dump(2) + "\n");
      }
      out << report.dump(2) << "\n";
      return report["passed"].get<bool>() ? kOk : kBoundViolation;
    }

    const ExperimentConfig config = apply_flags(load_config(flags.config), flags);

    if (oracle_cmd->parsed()) {
      const Json listing = oracle_listing(config);
      if (flags.out) {
        std::filesystem::create_directories(*flags.out);
        write_text(std::filesystem::path(*flags.out) / "oracle.json", listing.dump(2) + "\n");
      }
      out << listing.dump(2) << "\n";
      return kOk;
    }

    if (solve_cmd->parsed()) {
      const SolveOutcome result = solve(config);
      write_solve_outputs(config, result, config.output.directory);
      out << result.summary["statistics"].dump(2) << "\n";
      return kOk;
    }

    if (sweep_cmd->parsed()) {
      const auto rows = sweep(config);
      std::filesystem::create_directories(config.output.directory);
      const std::string table = sweep_csv(rows, config.seed);
      write_text(std::filesystem::path(config.output.directory) / "sweep.csv", table);
      out << table;
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}

}  // namespace eigensampler::cli
