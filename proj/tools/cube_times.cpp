// cube-times: Monte Carlo hitting/coupling time experiments on the
// {-1,+1}^n hypercube, plus exact small-n references.
//
// Exit codes: 0 success, 1 criterion failure or artifact mismatch,
// 2 usage/configuration error, 3 missing or unreadable data.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cubetimes/harness.hpp"

namespace {

using cubetimes::Experiment;
using cubetimes::ExperimentConfig;

void add_common_flags(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--n", cfg.n, "dimension of the hypercube")->capture_default_str();
  cmd->add_option("--samples", cfg.samples, "independent runs (per environment / per side)")
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  cmd->add_option("--workers", cfg.workers, "worker threads; 0 = all cores")
      ->capture_default_str();
  cmd->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--horizon", cfg.horizon, "absolute step cap (0 = default)")
      ->capture_default_str();
  cmd->add_option("--horizon-mult", cfg.horizon_mult,
                  "cap multiplier on the natural scale (0 = default)")
      ->capture_default_str();
  cmd->add_option("--t-grid", cfg.t_grid, "normalized time grid for survival summaries")
      ->delimiter(',');
  cmd->add_option("--delta", cfg.delta, "recorded regime exponent")->capture_default_str();
}

void add_gamma_flag(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--gamma", cfg.gamma, "set-size exponent, in (0,1)")->capture_default_str();
}

int run_and_report(const ExperimentConfig& cfg) {
  const cubetimes::RunResult r = cubetimes::run(cfg);
  for (const auto& c : r.criteria)
    std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  const auto& m = r.manifest;
  std::printf("wrote %s (%llu rows, %.2fs)\n", r.manifest_path.string().c_str(),
              static_cast<unsigned long long>(m.at("rows").get<std::uint64_t>()),
              m.at("wall_clock_seconds").get<double>());
  for (const auto& w : m.at("warnings")) std::printf("warning: %s\n", w.get<std::string>().c_str());
  return r.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hypercube walk timing laboratory"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string verify_target;

  auto* couple = app.add_subcommand("couple", "shared-noise coupling time of two walks");
  auto* converge = app.add_subcommand("converge", "distance law after a fixed number of steps");
  auto* self_ret = app.add_subcommand("self-return", "first return of the path to itself");
  auto* set_ret = app.add_subcommand("set-return", "return time to the visited prefix");
  auto* random_set = app.add_subcommand("random-set", "hitting time of a random dense set");
  auto* reflect = app.add_subcommand("reflect", "segment-disjointness reflection identity");
  auto* exact = app.add_subcommand("exact", "exact occupancy/equilibrium/absorption references");
  auto* verify = app.add_subcommand("verify", "re-derive a run from its manifest and compare");

  for (CLI::App* cmd : {couple, converge, self_ret, set_ret, random_set, reflect, exact})
    add_common_flags(cmd, cfg);
  add_gamma_flag(set_ret, cfg);
  add_gamma_flag(random_set, cfg);
  add_gamma_flag(self_ret, cfg);

  std::string walk_name = "flip";
  set_ret->add_option("--walk", walk_name, "dynamics: flip or heat-bath")
      ->check(CLI::IsMember({"flip", "heat-bath"}))
      ->capture_default_str();
  random_set->add_option("--envs", cfg.envs, "independent environments")->capture_default_str();
  reflect->add_option("--s", cfg.s, "first segment length")->capture_default_str();
  reflect->add_option("--u", cfg.u, "second segment length")->capture_default_str();

  verify->add_option("manifest", verify_target, "manifest.json path (or its directory)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) {
      std::filesystem::path p(verify_target);
      if (std::filesystem::is_directory(p)) p /= "manifest.json";
      const cubetimes::VerifyReport rep = cubetimes::verify(p);
      std::printf("%s\n", rep.report.dump(2).c_str());
      return rep.exit_code;
    }
    if (couple->parsed()) cfg.experiment = Experiment::Couple;
    if (converge->parsed()) cfg.experiment = Experiment::Converge;
    if (self_ret->parsed()) cfg.experiment = Experiment::SelfReturn;
    if (set_ret->parsed()) cfg.experiment = Experiment::SetReturn;
    if (random_set->parsed()) cfg.experiment = Experiment::RandomSet;
    if (reflect->parsed()) cfg.experiment = Experiment::Reflect;
    if (exact->parsed()) cfg.experiment = Experiment::Exact;
    cfg.kind = walk_name == "flip" ? cubetimes::WalkKind::Flip : cubetimes::WalkKind::HeatBath;
    return run_and_report(cfg);
  } catch (const cubetimes::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const cubetimes::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
