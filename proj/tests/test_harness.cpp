#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cubetimes/harness.hpp"

using namespace cubetimes;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("cubetimes-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CUBE_TIMES_BIN) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

ExperimentConfig small_couple() {
  ExperimentConfig cfg;
  cfg.experiment = Experiment::Couple;
  cfg.n = 16;
  cfg.samples = 200;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("configuration validation rejects undersized or malformed runs") {
  ExperimentConfig cfg = small_couple();
  cfg.samples = 10;
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small_couple();
  cfg.n = 0;
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small_couple();
  cfg.experiment = Experiment::SetReturn;
  cfg.gamma = 1.5;
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small_couple();
  cfg.experiment = Experiment::RandomSet;
  cfg.envs = 1;
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small_couple();
  cfg.experiment = Experiment::Reflect;
  cfg.u = 0;
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small_couple();
  cfg.t_grid = {};
  REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("rows are identical across worker counts") {
  ExperimentConfig one = small_couple();
  one.workers = 1;
  ExperimentConfig many = small_couple();
  many.workers = 3;
  const std::string csv_one = render_csv(compute(one).rows);
  const std::string csv_many = render_csv(compute(many).rows);
  REQUIRE(csv_one == csv_many);

  ExperimentConfig rs;
  rs.experiment = Experiment::RandomSet;
  rs.n = 64;
  rs.gamma = 0.5;
  rs.envs = 4;
  rs.samples = 25;
  rs.seed = 5;
  rs.workers = 1;
  ExperimentConfig rs3 = rs;
  rs3.workers = 3;
  REQUIRE(render_csv(compute(rs).rows) == render_csv(compute(rs3).rows));
}

TEST_CASE("rerunning a run reproduces every artifact byte for byte") {
  const fs::path dir_a = fresh_dir("rerun-a");
  const fs::path dir_b = fresh_dir("rerun-b");
  ExperimentConfig cfg = small_couple();
  cfg.out_dir = dir_a.string();
  run(cfg);
  cfg.out_dir = dir_b.string();
  run(cfg);
  REQUIRE(slurp(dir_a / "samples.csv") == slurp(dir_b / "samples.csv"));
  REQUIRE(slurp(dir_a / "summary.json") == slurp(dir_b / "summary.json"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("csv layout: header plus one row per sample") {
  ExperimentConfig cfg = small_couple();
  const ComputedRun data = compute(cfg);
  const std::string csv = render_csv(data.rows);
  REQUIRE(csv.rfind("sample_id,seed,value,normalized,censored\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  REQUIRE(lines == cfg.samples + 1);
  REQUIRE(data.rows.front().id == 0);
  REQUIRE(data.rows.back().id == cfg.samples - 1);
}

TEST_CASE("verify passes on intact runs and exposes tampering") {
  const fs::path dir = fresh_dir("verify");
  ExperimentConfig cfg = small_couple();
  cfg.out_dir = dir.string();
  const RunResult r = run(cfg);
  REQUIRE(r.all_pass);

  REQUIRE(verify(dir / "manifest.json").exit_code == 0);

  // flip one digit in a value field
  std::string csv = slurp(dir / "samples.csv");
  const std::size_t pos = csv.find(",", csv.find(",", csv.find('\n') + 1) + 1) + 1;
  csv[pos] = csv[pos] == '9' ? '8' : '9';
  {
    std::ofstream f(dir / "samples.csv", std::ios::binary | std::ios::trunc);
    f << csv;
  }
  const VerifyReport tampered = verify(dir / "manifest.json");
  REQUIRE(tampered.exit_code == 1);
  REQUIRE(tampered.report.at("samples_reproduced").get<bool>() == false);

  // restore, then tamper with the summary instead
  run(cfg);
  REQUIRE(verify(dir / "manifest.json").exit_code == 0);
  {
    std::ofstream f(dir / "summary.json", std::ios::binary | std::ios::app);
    f << " ";
  }
  REQUIRE(verify(dir / "manifest.json").exit_code == 1);

  // missing data file is an I/O failure, not a tamper verdict
  run(cfg);
  fs::remove(dir / "samples.csv");
  REQUIRE_THROWS_AS(verify(dir / "manifest.json"), IoError);
  REQUIRE_THROWS_AS(verify(dir / "no-such-manifest.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("manifest embeds the config faithfully") {
  const fs::path dir = fresh_dir("manifest");
  ExperimentConfig cfg = small_couple();
  cfg.out_dir = dir.string();
  const RunResult r = run(cfg);
  const ExperimentConfig echoed = r.manifest.at("config").get<ExperimentConfig>();
  REQUIRE(echoed.experiment == cfg.experiment);
  REQUIRE(echoed.n == cfg.n);
  REQUIRE(echoed.samples == cfg.samples);
  REQUIRE(echoed.seed == cfg.seed);
  REQUIRE(echoed.t_grid == cfg.t_grid);
  REQUIRE(r.manifest.at("summary").contains("mean"));
  REQUIRE(r.manifest.at("criteria").size() >= 2);
  fs::remove_all(dir);
}

TEST_CASE("exact experiment produces its oracle criteria") {
  ExperimentConfig cfg;
  cfg.experiment = Experiment::Exact;
  cfg.n = 6;
  cfg.samples = 2000;  // excursions
  cfg.seed = 3;
  const ComputedRun data = compute(cfg);
  bool monotone = false, solve = false, occupancy = false;
  for (const auto& c : data.criteria) {
    if (c.name == "tv-monotone") monotone = c.pass;
    if (c.name == "ehrenfest-solve-exact") solve = c.pass;
    if (c.name == "occupancy-normalized") occupancy = c.pass;
  }
  REQUIRE(monotone);
  REQUIRE(solve);
  REQUIRE(occupancy);
  // the sweep rows carry tv in value, normalized time in normalized
  REQUIRE(data.rows.front().value > data.rows.back().value);
}

TEST_CASE("command line interface maps outcomes to exit codes") {
  const fs::path dir = fresh_dir("cli");
  const std::string out = (dir / "run").string();

  REQUIRE(run_cli("reflect --n 8 --s 2 --u 3 --samples 50 --seed 4 --out " + out) == 0);
  REQUIRE(run_cli("verify " + out) == 0);
  REQUIRE(run_cli("verify " + (dir / "missing").string()) == 3);
  REQUIRE(run_cli("couple --samples 3 --out " + out) == 2);   // undersized
  REQUIRE(run_cli("no-such-subcommand") == 2);
  REQUIRE(run_cli("couple --bogus-flag 1") == 2);

  // tamper, then expect the mismatch exit code
  std::string csv = slurp(dir / "run" / "samples.csv");
  csv[csv.size() - 2] = csv[csv.size() - 2] == '0' ? '1' : '0';
  {
    std::ofstream f(dir / "run" / "samples.csv", std::ios::binary | std::ios::trunc);
    f << csv;
  }
  REQUIRE(run_cli("verify " + out) == 1);
  fs::remove_all(dir);
}

TEST_CASE("set-return normalizes by the estimated quantile") {
  ExperimentConfig cfg;
  cfg.experiment = Experiment::SetReturn;
  cfg.n = 10;
  cfg.gamma = 0.5;
  cfg.samples = 400;
  cfg.seed = 12;
  const ComputedRun data = compute(cfg);
  const std::uint64_t beta = data.summary.at("beta_hat").get<std::uint64_t>();
  REQUIRE(beta >= 1);
  for (const auto& row : data.rows)
    REQUIRE(row.normalized == row.value / static_cast<double>(beta));
  bool sandwich = false;
  for (const auto& c : data.criteria)
    if (c.name == "beta-sandwich") sandwich = c.pass;
  REQUIRE(sandwich);
}
