#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eigensampler/cli.hpp"

using namespace eigensampler;
namespace fs = std::filesystem;
using cli::Json;

namespace {

const fs::path kSource = EIGENSAMPLER_SOURCE_DIR;

Json small_config() {
  return Json::parse(R"({
    "schema_version": 1,
    "model": {"type": "tfim", "L": 3, "J": 1.0, "B": 0.5},
    "run": {"eta": 0.05, "steps": 200, "seed": 11, "record_every": 50, "ensemble_size": 3},
    "excited": {"levels": 2, "period": 2}
  })");
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("eigensampler_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }

  [[nodiscard]] fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  fs::path path_;
};

struct Invocation {
  int code = 0;
  std::string out;
  std::string err;
};

Invocation run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "eigensampler");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Invocation inv;
  inv.code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  inv.out = out.str();
  inv.err = err.str();
  return inv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const cli::ExperimentConfig c = cli::parse_config(small_config());
  EXPECT_EQ(c.model.sites, 3);
  EXPECT_EQ(c.seed, 11U);
  EXPECT_EQ(c.spectrum.run.seed, 11U);
  EXPECT_EQ(c.ensemble, 3U);
  EXPECT_EQ(c.spectrum.levels, 2U);
  EXPECT_TRUE(std::holds_alternative<DeterministicLift>(c.spectrum.schedule));
  EXPECT_EQ(c.spectrum.method, FilterMethod::ExactExponential);
  EXPECT_EQ(c.spectrum.init, "plus");
  EXPECT_EQ(c.output.formats, (std::vector<std::string>{"json", "csv"}));
}

TEST(Config, UnknownKeysRejected) {
  Json j = small_config();
  j["run"]["etaa"] = 0.1;
  EXPECT_THROW(cli::parse_config(j), ConfigError);
  j = small_config();
  j["extra"] = 1;
  EXPECT_THROW(cli::parse_config(j), ConfigError);
}

TEST(Config, SemanticErrors) {
  auto with = [](auto mutate) {
    Json j = small_config();
    mutate(j);
    return j;
  };
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j.erase("schema_version"); })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["schema_version"] = 2; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["run"]["eta"] = 1.5; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["run"]["eta"] = "fast"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["run"]["policy"] = "lucky"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["excited"]["p_lift"] = 0.5; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["excited"]["method"] = "state_based"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["excited"]["init"] = "Z:01"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["model"]["type"] = "heisenberg"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["model"]["type"] = "xxzz"; })), ConfigError);
  EXPECT_THROW(cli::parse_config(with([](Json& j) { j["output"] = {{"formats", {"xml"}}}; })), ConfigError);
}

TEST(Config, ResolvedRoundTrip) {
  Json j = small_config();
  j["model"]["type"] = "xxzz";
  j["model"]["K"] = 0.25;
  j["run"]["policy"] = "montecarlo";
  j["run"]["max_restarts"] = 7;
  j["excited"].erase("period");
  j["excited"]["p_lift"] = 0.5;
  j["excited"]["per_level"] = Json::parse(R"([{"eta": 0.02}, {"init": "zero", "steps": 40, "policy": "forced"}])");
  const cli::ExperimentConfig c = cli::parse_config(j);
  const Json r = cli::resolved(c);
  EXPECT_EQ(cli::resolved(cli::parse_config(r)), r);
  EXPECT_EQ(r["run"]["policy"], "montecarlo");
  EXPECT_EQ(r["excited"]["p_lift"], 0.5);
  EXPECT_EQ(r["excited"]["per_level"][1]["init"], "zero");
  EXPECT_EQ(std::get<MonteCarloPolicy>(c.spectrum.run.policy).max_restarts, 7U);
}

TEST(Config, PresetsLoad) {
  const cli::ExperimentConfig l4 = cli::load_config(kSource / "presets" / "tfim_l4.cfg");
  EXPECT_EQ(l4.model.sites, 4);
  EXPECT_EQ(l4.spectrum.levels, 4U);
  EXPECT_EQ(l4.spectrum.level_run(1).steps, 10000U);
  const cli::ExperimentConfig l10 = cli::load_config(kSource / "presets" / "tfim_l10.cfg");
  EXPECT_EQ(l10.model.sites, 10);
  EXPECT_EQ(l10.spectrum.level_init(1), "zero");
  EXPECT_THROW(cli::load_config(kSource / "presets" / "missing.cfg"), ConfigError);
}

TEST(Config, MalformedJson) {
  TempDir dir;
  EXPECT_THROW(cli::load_config(dir.write("bad.cfg", "{ not json")), ConfigError);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const fs::path bad = dir.write("bad.cfg", R"({"schema_version": 1, "run": {"bogus": 1}})");
  EXPECT_EQ(run_cli({"solve", "--config", bad.string()}).code, cli::kConfig);
  EXPECT_EQ(run_cli({"solve", "--config", (dir.path() / "none.cfg").string()}).code, cli::kConfig);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kConfig);
  EXPECT_EQ(run_cli({"solve"}).code, cli::kConfig);
  EXPECT_EQ(run_cli({"validate", "--only", "nope"}).code, cli::kRuntime);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kOk);

  const fs::path big = dir.write("big.cfg", R"({"schema_version": 1, "model": {"L": 14}})");
  EXPECT_EQ(run_cli({"oracle", "--config", big.string()}).code, cli::kRuntime);
}

TEST(Cli, OracleTwoSites) {
  TempDir dir;
  const fs::path cfg = dir.write("l2.cfg", R"({"schema_version": 1, "model": {"L": 2}})");
  const Invocation inv = run_cli({"oracle", "--config", cfg.string()});
  ASSERT_EQ(inv.code, cli::kOk) << inv.err;
  const Json j = Json::parse(inv.out);
  ASSERT_EQ(j["levels"].size(), 4U);
  EXPECT_NEAR(j["levels"][0]["energy"].get<double>(), -std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(j["levels"][3]["energy"].get<double>(), std::sqrt(5.0), 1e-12);
}

TEST(Cli, OracleSingleLevelAndPreset) {
  TempDir dir;
  const fs::path cfg = dir.write("k1.cfg", R"({"schema_version": 1, "oracle": {"levels": 1}})");
  const Invocation one = run_cli({"oracle", "--config", cfg.string()});
  ASSERT_EQ(one.code, cli::kOk) << one.err;
  EXPECT_EQ(Json::parse(one.out)["levels"].size(), 1U);

  const Invocation l4 = run_cli({"oracle", "--config", (kSource / "presets" / "tfim_l4.cfg").string()});
  ASSERT_EQ(l4.code, cli::kOk);
  EXPECT_NEAR(Json::parse(l4.out)["levels"][0]["energy"].get<double>(), -4.271558, 1e-6);
}

TEST(Cli, SolveWritesOutputsAndIsReproducible) {
  TempDir dir;
  const fs::path cfg = dir.write("small.cfg", small_config().dump());
  const fs::path a = dir.path() / "a";
  auto snapshot = [&] {
    std::map<std::string, std::string> m;
    for (const auto& f : sorted_files(a))
      if (f != "timing.json") m[f] = slurp(a / f);
    return m;
  };
  ASSERT_EQ(run_cli({"solve", "--config", cfg.string(), "--seed", "7", "--out", a.string()}).code, cli::kOk);
  const auto first = snapshot();
  EXPECT_EQ(sorted_files(a).size(), 2U + 3U * 2U);
  ASSERT_EQ(run_cli({"solve", "--config", cfg.string(), "--seed", "7", "--out", a.string()}).code, cli::kOk);
  EXPECT_EQ(first, snapshot());

  const Json summary = Json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(summary["seed"], 7);
  EXPECT_EQ(summary["resolved_config"]["run"]["seed"], 7);
  EXPECT_EQ(summary["members"].size(), 3U);
  EXPECT_EQ(summary["statistics"].size(), 2U);

  const std::string csv = slurp(a / "trajectory_member00_level0.csv");
  EXPECT_EQ(csv.rfind("# schema_version=1\n# seed=", 0), 0U);
  EXPECT_NE(csv.find("step,imaginary_time,projector_id,step_success_prob,energy,fidelity\n"), std::string::npos);
}

TEST(Cli, DifferentSeedsDiffer) {
  const cli::ExperimentConfig c = cli::parse_config(small_config());
  const auto a = cli::solve(cli::with_seed(c, 1));
  const auto b = cli::solve(cli::with_seed(c, 2));
  EXPECT_NE(a.summary["statistics"].dump(), b.summary["statistics"].dump());
}

TEST(Cli, EnsembleFlag) {
  TempDir dir;
  const fs::path cfg = dir.write("small.cfg", small_config().dump());
  ASSERT_EQ(run_cli({"solve", "--config", cfg.string(), "--ensemble", "1", "--out", dir.path().string()}).code, cli::kOk);
  EXPECT_EQ(Json::parse(slurp(dir.path() / "summary.json"))["members"].size(), 1U);
}

TEST(Cli, ValidateSubset) {
  const Invocation inv = run_cli({"validate", "--only", "appendix-b,circuits"});
  ASSERT_EQ(inv.code, cli::kOk) << inv.err;
  const Json j = Json::parse(inv.out);
  ASSERT_EQ(j["checks"].size(), 2U);
  EXPECT_EQ(j["checks"][0]["name"], "circuits");
  EXPECT_EQ(j["checks"][1]["name"], "appendix-b");
  EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Sweep, SinglePointMatchesSolve) {
  Json j = small_config();
  j["excited"]["levels"] = 1;
  const cli::ExperimentConfig c = cli::parse_config(j);
  const auto rows = cli::sweep(c);
  ASSERT_EQ(rows.size(), 1U);
  const auto solved = cli::solve(c);
  const Json& stats = solved.summary["statistics"][0];
  EXPECT_EQ(rows[0].median_energy, stats["median_energy"].get<double>());
  EXPECT_EQ(rows[0].median_fidelity, stats["median_fidelity"].get<double>());
}

TEST(Sweep, GridCapAndFixedTime) {
  Json j = small_config();
  j["sweep"] = {{"eta", {0.1, 0.05, 0.025}}, {"fixed_time", 5.0}, {"level", 0}};
  const cli::ExperimentConfig c = cli::parse_config(j);
  const auto points = cli::sweep_points(c);
  ASSERT_EQ(points.size(), 3U);
  EXPECT_EQ(points[0].steps, 50U);
  EXPECT_EQ(points[2].steps, 200U);

  j["sweep"] = {{"eta", {0.1, 0.05}}, {"steps", {10, 20, 30}}, {"max_points", 5}};
  EXPECT_THROW(cli::sweep_points(cli::parse_config(j)), ConfigError);
}

TEST(Sweep, FidelityImprovesWithSmallerEtaAtFixedTime) {
  Json j = Json::parse(slurp(kSource / "presets" / "tfim_l4.cfg"));
  j["excited"]["levels"] = 1;
  j["excited"].erase("per_level");
  j["run"]["representation"] = "pure";
  j["sweep"] = {{"eta", {0.1, 0.05, 0.025}}, {"fixed_time", 100.0}, {"level", 0}};
  const auto rows = cli::sweep(cli::parse_config(j));
  ASSERT_EQ(rows.size(), 3U);
  EXPECT_LT(rows[0].median_fidelity, rows[1].median_fidelity);
  EXPECT_LT(rows[1].median_fidelity, rows[2].median_fidelity);
}

TEST(Sweep, AcceptanceFallsWithLift) {
  Json j = Json::parse(slurp(kSource / "presets" / "tfim_l4.cfg"));
  j["excited"]["levels"] = 2;
  j["excited"]["method"] = "state_based";
  j["excited"]["per_level"] = Json::parse(R"([{"eta": 0.05, "steps": 2000}, {"eta": 0.05, "steps": 40, "policy": "montecarlo", "max_restarts": 100000}])");
  j["sweep"] = {{"p_lift", {1.0 / 15.0, 0.25, 0.5}}, {"level", 1}};
  const auto rows = cli::sweep(cli::parse_config(j));
  ASSERT_EQ(rows.size(), 3U);
  EXPECT_GT(rows[0].empirical_acceptance, rows[1].empirical_acceptance);
  EXPECT_GT(rows[1].empirical_acceptance, rows[2].empirical_acceptance);
  EXPECT_GT(rows[0].predicted_acceptance, rows[1].predicted_acceptance);
  EXPECT_GT(rows[1].predicted_acceptance, rows[2].predicted_acceptance);
}

TEST(Format, DoublesRoundTrip) {
  for (double x : {0.1, -4.271558, 1e-300, 12345.678901234567}) EXPECT_EQ(std::stod(cli::format_double(x)), x);
  EXPECT_EQ(cli::format_double(std::nan("")), "nan");
  EXPECT_DOUBLE_EQ(cli::median({3.0, std::nan(""), 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(cli::median({4.0, 1.0, 2.0, 3.0}), 2.5);
}
