#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cubetimes/environment.hpp"
#include "cubetimes/oracles.hpp"
#include "cubetimes/stats.hpp"
#include "cubetimes/stopping.hpp"
#include "cubetimes/walk.hpp"

namespace cubetimes {

inline constexpr const char* kArtifactVersion = "1.0.0";

// Usage problems (bad flags, undersized runs) vs environment problems
// (unreadable/unwritable files); the CLI maps them to exit codes 2 and 3.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Experiment { Couple, Converge, SelfReturn, SetReturn, RandomSet, Reflect, Exact };

inline const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::Couple: return "couple";
    case Experiment::Converge: return "converge";
    case Experiment::SelfReturn: return "self-return";
    case Experiment::SetReturn: return "set-return";
    case Experiment::RandomSet: return "random-set";
    case Experiment::Reflect: return "reflect";
    case Experiment::Exact: return "exact";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  for (Experiment e : {Experiment::Couple, Experiment::Converge, Experiment::SelfReturn,
                       Experiment::SetReturn, Experiment::RandomSet, Experiment::Reflect,
                       Experiment::Exact})
    if (s == experiment_name(e)) return e;
  return std::nullopt;
}

struct ExperimentConfig {
  Experiment experiment = Experiment::Couple;
  std::uint32_t n = 16;
  double gamma = 0.5;
  double delta = 0.1;              // recorded for N^(1+delta)-regime runs
  std::uint64_t samples = 1000;    // per environment for random-set, per side for reflect
  std::uint32_t envs = 200;        // random-set only
  std::uint64_t s = 10, u = 20;    // reflect segment lengths
  std::vector<double> t_grid = {0.25, 0.5, 1.0, 2.0, 3.0};
  std::uint64_t seed = 1;
  std::uint32_t workers = 0;       // 0 = hardware concurrency
  std::uint64_t horizon = 0;       // absolute cap override; 0 = default
  double horizon_mult = 0.0;       // scale-multiplier override; 0 = default
  WalkKind kind = WalkKind::Flip;  // set-return dynamics
  std::string out_dir = "out";
};

struct SampleRow {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  double value = 0;
  double normalized = 0;
  bool censored = false;
};

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ComputedRun {
  std::vector<SampleRow> rows;
  nlohmann::json summary;
  std::vector<CriterionResult> criteria;
  std::vector<std::string> warnings;
};

inline const char* kSeedRule =
    "row seed = mix64(mix64(mix64(master^golden)^fnv1a(lane))^index); lanes: couple, "
    "couple-geometric, converge, self-return, set-return, random-set, env, reflect-a, "
    "reflect-b, ehrenfest, segments";

namespace detail {

inline double fmt_round_trip_guard(double x) { return x; }

inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", fmt_round_trip_guard(x));
  return buf;
}

// Index-farmed parallel loop. Worker count never changes results: row i is a
// pure function of (config, i), and rows land in their own slots.
template <class Fn>
void farm(std::uint64_t total, std::uint32_t workers, Fn&& fn) {
  if (total == 0) return;
  if (workers == 0) {
    const unsigned hc = std::thread::hardware_concurrency();
    workers = hc == 0 ? 1 : hc;
  }
  if (workers > total) workers = static_cast<std::uint32_t>(total);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    try {
      for (;;) {
        const std::uint64_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= total) break;
        fn(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      next.store(total, std::memory_order_relaxed);  // drain remaining work
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::uint32_t w = 0; w + 1 < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

inline double survival_at(std::span<const double> sorted_or_not, double t) {
  std::uint64_t c = 0;
  for (double x : sorted_or_not)
    if (x >= t) ++c;
  return sorted_or_not.empty() ? 0.0 : static_cast<double>(c) / sorted_or_not.size();
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace detail

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("n must be >= 1");
  if (cfg.samples < 1) throw ConfigError("samples must be >= 1");
  if (cfg.t_grid.empty()) throw ConfigError("t-grid must not be empty");
  for (double t : cfg.t_grid)
    if (!(t >= 0.0)) throw ConfigError("t-grid entries must be >= 0");
  switch (cfg.experiment) {
    case Experiment::Couple:
      if (cfg.samples < 30) throw ConfigError("couple needs >= 30 samples for the mean interval");
      break;
    case Experiment::Converge:
      if (cfg.n < 2) throw ConfigError("converge needs n >= 2");
      if (cfg.samples < 30) throw ConfigError("converge needs >= 30 samples");
      break;
    case Experiment::SelfReturn:
      if (cfg.n < 2) throw ConfigError("self-return needs n >= 2");
      if (cfg.samples < 10) throw ConfigError("self-return needs >= 10 samples");
      break;
    case Experiment::SetReturn:
      if (cfg.n < 2) throw ConfigError("set-return needs n >= 2");
      if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
      if (cfg.samples < 20) throw ConfigError("set-return needs >= 20 samples (split halves)");
      break;
    case Experiment::RandomSet:
      if (cfg.n < 2) throw ConfigError("random-set needs n >= 2");
      if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
      if (cfg.envs < 2) throw ConfigError("random-set needs >= 2 environments");
      break;
    case Experiment::Reflect:
      if (cfg.u < 1) throw ConfigError("reflect needs u >= 1 (the reflected side uses u-1)");
      break;
    case Experiment::Exact:
      if (cfg.n < 2) throw ConfigError("exact needs n >= 2");
      break;
  }
}

// ---------------------------------------------------------------------------
// Experiment runners. Each produces index-deterministic rows plus a summary;
// criteria come in two tiers: generic checks that apply to any run of the
// experiment, and pinned checks that only fire on their calibrated
// configuration (dimension/sample sizes with frozen thresholds).
// ---------------------------------------------------------------------------

namespace runners {

inline ComputedRun couple(const ExperimentConfig& cfg) {
  ComputedRun out;
  const double nlog = static_cast<double>(cfg.n) * std::log(static_cast<double>(cfg.n));
  const std::uint64_t cap =
      cfg.horizon ? cfg.horizon
                  : static_cast<std::uint64_t>(
                        (cfg.horizon_mult > 0 ? cfg.horizon_mult : 50.0) * cfg.n *
                        (1.0 + std::log(static_cast<double>(cfg.n)))) +
                        1;
  out.rows.resize(cfg.samples);
  detail::farm(cfg.samples, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    row.id = i;
    row.seed = derive_seed(cfg.seed, lane_tag("couple"), i);
    try {
      const std::uint64_t t = coupling_time_direct(cfg.n, row.seed, cap);
      row.value = static_cast<double>(t);
      row.censored = false;
    } catch (const std::runtime_error&) {
      row.value = static_cast<double>(cap);
      row.censored = true;
    }
    row.normalized = cfg.n >= 2 ? row.value / nlog : row.value;
  });

  std::vector<double> direct;
  direct.reserve(cfg.samples);
  for (const auto& r : out.rows)
    if (!r.censored) direct.push_back(r.value);
  std::uint64_t censored = cfg.samples - direct.size();

  std::vector<double> geometric(cfg.samples);
  for (std::uint64_t i = 0; i < cfg.samples; ++i)
    geometric[i] = static_cast<double>(
        coupling_time_geometric(cfg.n, derive_seed(cfg.seed, lane_tag("couple-geometric"), i)));

  const EmpiricalLaw law(direct);
  const MeanCi ci = mean_ci(law, 0.95);
  const double exact_mean = expected_coupling_time(cfg.n);
  const double exact_sd = std::sqrt(variance_coupling_time(cfg.n));
  const KsResult ks = ks_two_sample(law, EmpiricalLaw(geometric));

  out.summary["n"] = cfg.n;
  out.summary["samples"] = cfg.samples;
  out.summary["censored"] = censored;
  out.summary["mean"] = ci.mean;
  out.summary["se"] = ci.se;
  out.summary["ci95"] = {ci.lo, ci.hi};
  out.summary["exact_mean"] = exact_mean;
  out.summary["exact_sd"] = exact_sd;
  out.summary["min"] = law.min();
  out.summary["max"] = law.max();
  out.summary["ks_geometric"] = {{"d", ks.statistic}, {"p", ks.p_value}};
  if (cfg.n >= 2) out.summary["ratio_over_nlogn"] = ci.mean / nlog;

  {
    const bool pass = std::abs(ci.mean - exact_mean) <= 3.0 * ci.se;
    std::ostringstream d;
    d << "mean " << ci.mean << " vs exact " << exact_mean << ", 3se = " << 3.0 * ci.se;
    out.criteria.push_back({"coupling-mean-vs-exact", pass, d.str()});
  }
  {
    const bool pass = ks.p_value >= 0.01;
    std::ostringstream d;
    d << "two-sample KS direct vs geometric: D = " << ks.statistic << ", p = " << ks.p_value;
    out.criteria.push_back({"coupling-direct-vs-geometric-ks", pass, d.str()});
  }
  if (cfg.n == 1024 && cfg.samples == 2000) {
    const double ratio = ci.mean / nlog;
    const bool pass = ratio >= 1.00 && ratio <= 1.12;
    std::ostringstream d;
    d << "mean/(n ln n) = " << ratio << ", band [1.00, 1.12]";
    out.criteria.push_back({"coupling-nlogn-ratio", pass, d.str()});
  }
  return out;
}

inline ComputedRun converge(const ExperimentConfig& cfg) {
  ComputedRun out;
  const double lnn = std::log(static_cast<double>(cfg.n));
  const std::uint64_t duration =
      cfg.horizon ? cfg.horizon
                  : static_cast<std::uint64_t>(
                        std::floor((cfg.horizon_mult > 0 ? cfg.horizon_mult : 10.0) * cfg.n * lnn));
  out.rows.resize(cfg.samples);
  detail::farm(cfg.samples, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    row.id = i;
    row.seed = derive_seed(cfg.seed, lane_tag("converge"), i);
    NoiseStream ns(row.seed);
    Configuration c(cfg.n);
    for (std::uint64_t t = 0; t < duration; ++t) step(c, WalkKind::HeatBath, ns);
    row.value = c.minus_count();
    row.normalized = row.value / cfg.n;
  });

  std::vector<double> ds;
  ds.reserve(cfg.samples);
  for (const auto& r : out.rows) ds.push_back(r.value);
  const EmpiricalLaw law(ds);
  const MeanCi ci = mean_ci(law, 0.95);

  out.summary["n"] = cfg.n;
  out.summary["samples"] = cfg.samples;
  out.summary["steps"] = duration;
  out.summary["mean_distance"] = ci.mean;
  out.summary["ci95"] = {ci.lo, ci.hi};

  const bool oracle_feasible = cfg.n <= 4096;
  if (oracle_feasible) {
    const detail::LogBinom lb(cfg.n);
    const auto lp = detail::occupancy_log_pmf(cfg.n, duration);
    detail::Kahan exact_mean;
    double max_dev = 0.0;
    std::vector<std::uint64_t> counts(cfg.n + 1, 0);
    for (const auto& r : out.rows) ++counts[static_cast<std::uint32_t>(r.value)];
    for (std::uint32_t d = 0; d <= cfg.n; ++d) {
      const double le = detail::equilibrium_log_pointwise(cfg.n, duration, d, lp, lb);
      const double class_p = le == detail::kNegInf ? 0.0 : std::exp(lb(cfg.n, d) + le);
      exact_mean.add(static_cast<double>(d) * class_p);
      const double emp = static_cast<double>(counts[d]) / cfg.samples;
      max_dev = std::max(max_dev, std::abs(emp - class_p));
    }
    out.summary["exact_mean_distance"] = exact_mean.sum;
    out.summary["max_class_pmf_dev"] = max_dev;
    const bool pass = ci.covers(exact_mean.sum);
    std::ostringstream d;
    d << "exact mean " << exact_mean.sum << " vs CI [" << ci.lo << ", " << ci.hi << "]";
    out.criteria.push_back({"converge-mean-in-ci", pass, d.str()});
  }
  return out;
}

inline ComputedRun self_return_run(const ExperimentConfig& cfg) {
  ComputedRun out;
  const std::uint64_t horizon =
      cfg.horizon ? cfg.horizon
                  : static_cast<std::uint64_t>((cfg.horizon_mult > 0 ? cfg.horizon_mult : 50.0) *
                                               cfg.n);
  out.rows.resize(cfg.samples);
  std::vector<std::uint8_t> agree(cfg.samples, 0), order_ok(cfg.samples, 1);
  std::atomic<std::uint64_t> gamma1_censored{0};
  detail::farm(cfg.samples, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    row.id = i;
    row.seed = derive_seed(cfg.seed, lane_tag("self-return"), i);
    const SelfReturnSample s = self_return(cfg.n, row.seed, horizon);
    row.value = static_cast<double>(s.s_censored ? horizon : s.s);
    row.censored = s.s_censored;
    row.normalized = row.value / cfg.n;
    agree[i] = s.agree ? 1 : 0;
    if (!s.gamma1_censored && (s.s_censored || s.s > s.gamma1)) order_ok[i] = 0;
    if (s.gamma1_censored) gamma1_censored.fetch_add(1, std::memory_order_relaxed);
  });

  std::uint64_t censored = 0, agreed = 0, ordered = cfg.samples;
  std::vector<double> normalized;
  normalized.reserve(cfg.samples);
  for (std::uint64_t i = 0; i < cfg.samples; ++i) {
    censored += out.rows[i].censored ? 1 : 0;
    agreed += agree[i];
    if (!order_ok[i]) --ordered;
    if (!out.rows[i].censored) normalized.push_back(out.rows[i].normalized);
  }
  const double agree_fraction = static_cast<double>(agreed) / cfg.samples;
  const double censored_fraction = static_cast<double>(censored) / cfg.samples;

  out.summary["n"] = cfg.n;
  out.summary["samples"] = cfg.samples;
  out.summary["horizon"] = horizon;
  out.summary["censored"] = censored;
  out.summary["censored_fraction"] = censored_fraction;
  out.summary["agree_fraction"] = agree_fraction;
  out.summary["gamma1_censored"] = gamma1_censored.load();

  if (normalized.size() >= 10) {
    const EmpiricalLaw law(normalized);
    const KsResult ks = ks_exponential(law);
    out.summary["ks_exponential"] = {{"d", ks.statistic}, {"p", ks.p_value}};
    out.summary["mean_normalized"] = law.mean();
    if (cfg.n == 5000 && cfg.samples == 5000) {
      const bool pass = ks.statistic <= 0.03;
      std::ostringstream d;
      d << "KS distance to Exp(1): " << ks.statistic << " (cap 0.03), p = " << ks.p_value;
      out.criteria.push_back({"self-return-exp-ks", pass, d.str()});
    }
  }

  {
    const bool pass = ordered == cfg.samples;
    std::ostringstream d;
    d << ordered << "/" << cfg.samples << " samples satisfy s <= gamma1";
    out.criteria.push_back({"self-return-order", pass, d.str()});
  }
  if (cfg.n == 1000 && cfg.samples == 5000) {
    const bool pass = agree_fraction >= 0.99;
    std::ostringstream d;
    d << "fraction with s = gamma1: " << agree_fraction << " (floor 0.99)";
    out.criteria.push_back({"self-return-agreement", pass, d.str()});
  }
  if (cfg.n == 10000 && cfg.samples == 5000 && cfg.horizon == 100) {
    // survival past floor(n^0.5 * 1) steps == a fully distinct prefix
    const bool pass = censored_fraction >= 0.98;
    std::ostringstream d;
    d << "fraction of fully distinct prefixes: " << censored_fraction << " (floor 0.98)";
    out.criteria.push_back({"prefix-distinct-points", pass, d.str()});
  }
  return out;
}

inline ComputedRun set_return(const ExperimentConfig& cfg) {
  ComputedRun out;
  out.rows.resize(cfg.samples);
  std::vector<std::uint64_t> f_sizes(cfg.samples, 0);
  detail::farm(cfg.samples, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    row.id = i;
    row.seed = derive_seed(cfg.seed, lane_tag("set-return"), i);
    const SetReturnSample s =
        prefix_return(cfg.n, cfg.gamma, row.seed, cfg.kind, cfg.horizon);
    row.value = static_cast<double>(s.censored ? s.horizon : s.r);
    row.censored = s.censored;
    f_sizes[i] = s.f_size;
  });

  const std::uint64_t half = cfg.samples / 2;
  std::vector<std::uint64_t> estimating;
  estimating.reserve(half);
  for (std::uint64_t i = 0; i < half; ++i)
    estimating.push_back(static_cast<std::uint64_t>(out.rows[i].value) +
                         (out.rows[i].censored ? 1 : 0));
  const std::uint64_t beta = estimate_beta(estimating);
  for (auto& row : out.rows) row.normalized = row.value / static_cast<double>(beta);

  std::vector<double> verification;
  verification.reserve(cfg.samples - half);
  std::uint64_t censored = 0;
  for (std::uint64_t i = 0; i < cfg.samples; ++i) {
    censored += out.rows[i].censored ? 1 : 0;
    if (i >= half && !out.rows[i].censored) verification.push_back(out.rows[i].normalized);
  }

  const double inv_e = std::exp(-1.0);
  const EmpiricalLaw est_raw([&] {
    std::vector<double> v;
    v.reserve(half);
    for (std::uint64_t i = 0; i < half; ++i) v.push_back(out.rows[i].value);
    return v;
  }());
  const double surv_beta = est_raw.survival(static_cast<double>(beta));
  const double surv_beta_m1 = est_raw.survival(static_cast<double>(beta - 1));

  std::uint64_t f_min = f_sizes[0], m = 0;
  double f_mean = 0;
  for (std::uint64_t f : f_sizes) {
    f_min = std::min(f_min, f);
    f_mean += static_cast<double>(f);
  }
  f_mean /= static_cast<double>(cfg.samples);
  m = static_cast<std::uint64_t>(std::floor(std::pow(static_cast<double>(cfg.n), cfg.gamma)));

  out.summary["n"] = cfg.n;
  out.summary["gamma"] = cfg.gamma;
  out.summary["walk"] = cfg.kind == WalkKind::Flip ? "flip" : "heat-bath";
  out.summary["samples"] = cfg.samples;
  out.summary["censored"] = censored;
  out.summary["m"] = m;
  out.summary["f_min"] = f_min;
  out.summary["f_mean"] = f_mean;
  out.summary["beta_hat"] = beta;
  out.summary["sandwich"] = {{"surv_at_beta", surv_beta}, {"surv_at_beta_minus_1", surv_beta_m1}};

  EmpiricalLaw verify_law(verification);
  nlohmann::json bands = nlohmann::json::array();
  for (double t : cfg.t_grid) {
    const double p_hat = verify_law.survival(t);
    bands.push_back({{"t", t}, {"p_hat", p_hat}, {"expected", std::exp(-t)},
                     {"abs_dev", std::abs(p_hat - std::exp(-t))}});
  }
  out.summary["verify_survival"] = bands;
  const double mean_ratio = verify_law.mean();
  out.summary["mean_ratio_verify"] = mean_ratio;
  const double p1 = verify_law.survival(1.0);
  const double p2 = verify_law.survival(2.0);
  const double p3 = verify_law.survival(3.0);
  const double alpha_hat =
      std::max(p1, std::max(std::sqrt(p2), std::cbrt(p3)));
  out.summary["alpha_hat"] = alpha_hat;
  out.summary["tail_p_ge_2beta"] = p2;
  out.summary["tail_p_ge_3beta"] = p3;

  {
    const bool pass = surv_beta <= inv_e && inv_e < surv_beta_m1;
    std::ostringstream d;
    d << "P(R >= beta) = " << surv_beta << " <= 1/e < P(R >= beta-1) = " << surv_beta_m1;
    out.criteria.push_back({"beta-sandwich", pass, d.str()});
  }
  if (cfg.n == 20 && cfg.gamma == 0.5 && cfg.samples == 2000 && cfg.kind == WalkKind::Flip) {
    bool band_ok = true;
    std::ostringstream bd;
    for (double t : {0.5, 1.0, 2.0}) {
      const double p_hat = verify_law.survival(t);
      const double dev = std::abs(p_hat - std::exp(-t));
      band_ok = band_ok && dev <= 0.07;
      bd << "t=" << t << ": |" << p_hat << " - " << std::exp(-t) << "| = " << dev << "; ";
    }
    out.criteria.push_back({"set-return-survival-band", band_ok, bd.str() + "cap 0.07"});

    const bool ratio_ok = mean_ratio >= 0.85 && mean_ratio <= 1.15;
    std::ostringstream rd;
    rd << "mean(R)/beta_hat = " << mean_ratio << ", band [0.85, 1.15]";
    out.criteria.push_back({"set-return-mean-ratio", ratio_ok, rd.str()});

    const double tail_cap = std::exp(-2.0) + 0.05;
    const bool tail_ok = p2 <= tail_cap;
    std::ostringstream td;
    td << "P(R >= 2 beta_hat) = " << p2 << ", cap " << tail_cap;
    out.criteria.push_back({"set-return-tail-envelope", tail_ok, td.str()});
  }
  return out;
}

inline ComputedRun random_set(const ExperimentConfig& cfg) {
  ComputedRun out;
  const double scale = std::pow(static_cast<double>(cfg.n), cfg.gamma);
  const std::uint64_t horizon =
      cfg.horizon ? cfg.horizon
                  : static_cast<std::uint64_t>((cfg.horizon_mult > 0 ? cfg.horizon_mult : 50.0) *
                                               scale) +
                        1;
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.envs) * cfg.samples;
  out.rows.resize(total);
  detail::farm(total, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    const std::uint64_t env_index = i / cfg.samples;
    row.id = i;
    row.seed = derive_seed(cfg.seed, lane_tag("random-set"), i);
    const std::uint64_t env_seed = derive_seed(cfg.seed, lane_tag("env"), env_index);
    const HitSample h = random_set_hit(cfg.n, cfg.gamma, env_seed, row.seed, horizon);
    row.value = static_cast<double>(h.censored ? horizon : h.theta);
    row.censored = h.censored;
    row.normalized = row.value / scale;
  });

  std::uint64_t censored = 0, black_starts = 0;
  for (const auto& r : out.rows) {
    censored += r.censored ? 1 : 0;
    if (!r.censored && r.value == 0.0) ++black_starts;
  }

  std::vector<EmpiricalLaw> laws;
  laws.reserve(cfg.envs);
  for (std::uint32_t e = 0; e < cfg.envs; ++e) {
    std::vector<double> v;
    v.reserve(cfg.samples);
    for (std::uint64_t w = 0; w < cfg.samples; ++w)
      v.push_back(out.rows[static_cast<std::uint64_t>(e) * cfg.samples + w].value);
    laws.emplace_back(std::move(v));
  }
  const QuenchedSummary qs = quenched_aggregate(laws, cfg.t_grid, scale);

  const double p_black = RandomEnvironment(cfg.n, cfg.gamma, 0).black_probability();
  out.summary["n"] = cfg.n;
  out.summary["gamma"] = cfg.gamma;
  out.summary["environments"] = cfg.envs;
  out.summary["walks_per_environment"] = cfg.samples;
  out.summary["scale"] = scale;
  out.summary["horizon"] = horizon;
  out.summary["censored"] = censored;
  out.summary["black_start_fraction"] = static_cast<double>(black_starts) / total;
  nlohmann::json grid = nlohmann::json::array();
  double max_dev = 0.0, max_var = 0.0;
  for (std::size_t g = 0; g < qs.grid.size(); ++g) {
    const double t = qs.grid[g];
    const double expected = std::exp(-t);
    const double product_form =
        geometric_tail(p_black, static_cast<std::uint64_t>(std::floor(scale * t)) + 1);
    max_dev = std::max(max_dev, std::abs(qs.mean[g] - expected));
    max_var = std::max(max_var, qs.variance[g]);
    grid.push_back({{"t", t},
                    {"annealed_mean", qs.mean[g]},
                    {"env_variance", qs.variance[g]},
                    {"expected", expected},
                    {"product_form", product_form}});
  }
  out.summary["survival"] = grid;
  out.summary["max_abs_dev"] = max_dev;
  out.summary["max_env_variance"] = max_var;

  if (cfg.n == 10000 && cfg.gamma == 0.6 && cfg.envs == 200 && cfg.samples == 200) {
    {
      const bool pass = max_dev <= 0.05;
      std::ostringstream d;
      d << "max |annealed - e^-t| over grid = " << max_dev << " (cap 0.05)";
      out.criteria.push_back({"random-set-annealed", pass, d.str()});
    }
    {
      const bool pass = max_var <= 0.01;
      std::ostringstream d;
      d << "max across-environment variance = " << max_var << " (cap 0.01)";
      out.criteria.push_back({"random-set-quenched-variance", pass, d.str()});
    }
  }
  return out;
}

inline ComputedRun reflect(const ExperimentConfig& cfg) {
  ComputedRun out;
  const std::uint64_t total = 2 * cfg.samples;
  out.rows.resize(total);
  detail::farm(total, cfg.workers, [&](std::uint64_t i) {
    SampleRow& row = out.rows[i];
    row.id = i;
    const bool side_a = i < cfg.samples;
    const std::uint64_t j = side_a ? i : i - cfg.samples;
    row.seed = derive_seed(cfg.seed, lane_tag(side_a ? "reflect-a" : "reflect-b"), j);
    const bool disjoint =
        side_a ? detail::segments_disjoint_once(cfg.n, cfg.s, cfg.u, row.seed)
               : detail::segments_disjoint_once(cfg.n, cfg.u - 1, cfg.s + 1, row.seed);
    row.value = disjoint ? 1.0 : 0.0;
    row.normalized = row.value;
  });

  std::uint64_t hits_a = 0, hits_b = 0;
  for (std::uint64_t i = 0; i < cfg.samples; ++i) hits_a += out.rows[i].value == 1.0;
  for (std::uint64_t i = cfg.samples; i < total; ++i) hits_b += out.rows[i].value == 1.0;
  const ZResult z = two_proportion_z(hits_a, cfg.samples, hits_b, cfg.samples);

  out.summary["n"] = cfg.n;
  out.summary["s"] = cfg.s;
  out.summary["u"] = cfg.u;
  out.summary["reflected"] = {{"s", cfg.u - 1}, {"u", cfg.s + 1}};
  out.summary["runs_per_side"] = cfg.samples;
  out.summary["p_direct"] = static_cast<double>(hits_a) / cfg.samples;
  out.summary["p_reflected"] = static_cast<double>(hits_b) / cfg.samples;
  out.summary["z"] = z.z;
  out.summary["p_value"] = z.p_value;

  if (cfg.samples >= 1000) {
    const bool pass = z.p_value >= 0.01;
    std::ostringstream d;
    d << "two-proportion z = " << z.z << ", p = " << z.p_value << " (reject below 0.01)";
    out.criteria.push_back({"reflection-z-test", pass, d.str()});
  }
  return out;
}

inline ComputedRun exact(const ExperimentConfig& cfg) {
  ComputedRun out;
  const double lnn = std::log(static_cast<double>(cfg.n));
  const std::uint64_t t_star =
      cfg.horizon ? cfg.horizon
                  : static_cast<std::uint64_t>(
                        std::floor((cfg.horizon_mult > 0 ? cfg.horizon_mult : 10.0) * cfg.n * lnn));

  std::vector<std::uint64_t> ts;
  for (std::uint64_t t = 0; t <= std::min<std::uint64_t>(16, t_star); ++t) ts.push_back(t);
  for (std::uint64_t t = 20; t < t_star; t = std::max(t + 1, t * 5 / 4)) ts.push_back(t);
  if (ts.empty() || ts.back() != t_star) ts.push_back(t_star);

  out.rows.resize(ts.size());
  double prev_tv = 1.0;
  bool monotone = true;
  double occ_max_dev = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const std::uint64_t t = ts[k];
    const double tv = tv_distance_to_uniform(cfg.n, t);
    const OccupancyDistribution occ = occupancy_pmf(cfg.n, t);
    detail::Kahan total;
    for (double p : occ.p) total.add(p);
    occ_max_dev = std::max(occ_max_dev, std::abs(total.sum - 1.0));
    if (k > 0 && tv > prev_tv + 1e-15) monotone = false;
    prev_tv = tv;
    SampleRow& row = out.rows[k];
    row.id = k;
    row.seed = 0;
    row.value = tv;
    row.normalized = static_cast<double>(t) / (cfg.n * lnn);
  }
  const double tv_final = out.rows.back().value;

  // Normalization of the pointwise law at t_star.
  const detail::LogBinom lb(cfg.n);
  const auto lp = detail::occupancy_log_pmf(cfg.n, t_star);
  detail::Kahan eqsum;
  for (std::uint32_t d = 0; d <= cfg.n; ++d) {
    const double le = detail::equilibrium_log_pointwise(cfg.n, t_star, d, lp, lb);
    if (le != detail::kNegInf) eqsum.add(std::exp(lb(cfg.n, d) + le));
  }
  const double eq_norm_dev = std::abs(eqsum.sum - 1.0);

  const double solve = ehrenfest_zero_before_return(cfg.n);
  const double closed = 2.0 / (static_cast<double>(cfg.n) * cfg.n);
  const std::uint64_t excursions = cfg.samples;
  const std::uint64_t hits = ehrenfest_zero_before_return_mc(
      cfg.n, excursions, derive_seed(cfg.seed, lane_tag("ehrenfest"), 0));
  const double mc_p = static_cast<double>(hits) / excursions;
  const double mc_se = std::sqrt(closed * (1.0 - closed) / excursions);

  out.summary["n"] = cfg.n;
  out.summary["t_star"] = t_star;
  out.summary["sweep_points"] = ts.size();
  out.summary["tv_final"] = tv_final;
  out.summary["tv_monotone"] = monotone;
  out.summary["occupancy_max_norm_dev"] = occ_max_dev;
  out.summary["equilibrium_norm_dev"] = eq_norm_dev;
  out.summary["ehrenfest"] = {{"solve", solve},
                              {"closed_form", closed},
                              {"abs_err", std::abs(solve - closed)},
                              {"excursions", excursions},
                              {"hits", hits},
                              {"mc_p", mc_p},
                              {"mc_se", mc_se}};

  {
    std::ostringstream d;
    d << "tv nonincreasing over " << ts.size() << " sweep points";
    out.criteria.push_back({"tv-monotone", monotone, d.str()});
  }
  {
    const bool pass = occ_max_dev <= 1e-12;
    std::ostringstream d;
    d << "max |sum p_r - 1| over sweep = " << occ_max_dev;
    out.criteria.push_back({"occupancy-normalized", pass, d.str()});
  }
  {
    const bool pass = eq_norm_dev <= 1e-9;
    std::ostringstream d;
    d << "|sum_d C(n,d) eq_d - 1| at t* = " << eq_norm_dev;
    out.criteria.push_back({"equilibrium-normalized", pass, d.str()});
  }
  if (cfg.n == 10) {
    const bool pass = tv_final <= 1e-6;
    std::ostringstream d;
    d << "tv at t* = " << t_star << " is " << tv_final << " (cap 1e-6)";
    out.criteria.push_back({"tv-mixed-at-10nlogn", pass, d.str()});
  }
  {
    const bool pass = std::abs(solve - closed) <= 1e-12;
    std::ostringstream d;
    d << "linear solve " << solve << " vs 2/n^2 = " << closed;
    out.criteria.push_back({"ehrenfest-solve-exact", pass, d.str()});
  }
  if (excursions >= 100000) {
    const bool pass = std::abs(mc_p - closed) <= 3.0 * mc_se;
    std::ostringstream d;
    d << "mc " << mc_p << " vs " << closed << ", 3se = " << 3.0 * mc_se;
    out.criteria.push_back({"ehrenfest-mc-3se", pass, d.str()});
  }
  return out;
}

}  // namespace runners

inline ComputedRun compute(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ComputedRun out;
  switch (cfg.experiment) {
    case Experiment::Couple: out = runners::couple(cfg); break;
    case Experiment::Converge: out = runners::converge(cfg); break;
    case Experiment::SelfReturn: out = runners::self_return_run(cfg); break;
    case Experiment::SetReturn: out = runners::set_return(cfg); break;
    case Experiment::RandomSet: out = runners::random_set(cfg); break;
    case Experiment::Reflect: out = runners::reflect(cfg); break;
    case Experiment::Exact: out = runners::exact(cfg); break;
  }
  std::uint64_t censored = 0;
  for (const auto& r : out.rows) censored += r.censored ? 1 : 0;
  if (!out.rows.empty() && static_cast<double>(censored) / out.rows.size() > 0.01) {
    std::ostringstream w;
    w << "censoring rate " << (100.0 * censored / out.rows.size())
      << "% exceeds 1%; consider a larger horizon";
    out.warnings.push_back(w.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  j = nlohmann::json{{"experiment", experiment_name(cfg.experiment)},
                     {"n", cfg.n},
                     {"gamma", cfg.gamma},
                     {"delta", cfg.delta},
                     {"samples", cfg.samples},
                     {"envs", cfg.envs},
                     {"s", cfg.s},
                     {"u", cfg.u},
                     {"t_grid", cfg.t_grid},
                     {"seed", cfg.seed},
                     {"workers", cfg.workers},
                     {"horizon", cfg.horizon},
                     {"horizon_mult", cfg.horizon_mult},
                     {"walk", cfg.kind == WalkKind::Flip ? "flip" : "heat-bath"},
                     {"out_dir", cfg.out_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  const auto exp = parse_experiment(j.at("experiment").get<std::string>());
  if (!exp) throw ConfigError("unknown experiment in manifest");
  cfg.experiment = *exp;
  cfg.n = j.at("n").get<std::uint32_t>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.delta = j.at("delta").get<double>();
  cfg.samples = j.at("samples").get<std::uint64_t>();
  cfg.envs = j.at("envs").get<std::uint32_t>();
  cfg.s = j.at("s").get<std::uint64_t>();
  cfg.u = j.at("u").get<std::uint64_t>();
  cfg.t_grid = j.at("t_grid").get<std::vector<double>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.workers = j.at("workers").get<std::uint32_t>();
  cfg.horizon = j.at("horizon").get<std::uint64_t>();
  cfg.horizon_mult = j.at("horizon_mult").get<double>();
  const std::string walk = j.at("walk").get<std::string>();
  if (walk == "flip")
    cfg.kind = WalkKind::Flip;
  else if (walk == "heat-bath")
    cfg.kind = WalkKind::HeatBath;
  else
    throw ConfigError("unknown walk kind in manifest");
  cfg.out_dir = j.at("out_dir").get<std::string>();
}

inline std::string render_csv(const std::vector<SampleRow>& rows) {
  std::string out = "sample_id,seed,value,normalized,censored\n";
  char buf[160];
  for (const SampleRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%.17g,%d\n",
                  static_cast<unsigned long long>(r.id),
                  static_cast<unsigned long long>(r.seed), r.value, r.normalized,
                  r.censored ? 1 : 0);
    out += buf;
  }
  return out;
}

struct RunResult {
  nlohmann::json manifest;
  std::vector<CriterionResult> criteria;
  bool all_pass = true;
  std::filesystem::path manifest_path;
};

// Runs the experiment and writes samples.csv, summary.json, manifest.json
// into cfg.out_dir. Files are byte-stable across worker counts; wall clock
// lives only in the manifest.
inline RunResult run(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  ComputedRun data = compute(cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir);

  auto write_file = [&](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + p.string() + " for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("failed writing " + p.string());
  };

  const fs::path dir(cfg.out_dir);
  write_file(dir / "samples.csv", render_csv(data.rows));
  write_file(dir / "summary.json", data.summary.dump(2) + "\n");

  RunResult result;
  result.criteria = data.criteria;
  for (const auto& c : data.criteria) result.all_pass = result.all_pass && c.pass;

  nlohmann::json criteria = nlohmann::json::array();
  for (const auto& c : data.criteria)
    criteria.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});

  result.manifest = nlohmann::json{
      {"artifact", {{"name", "cube-times"}, {"version", kArtifactVersion}}},
      {"config", cfg},
      {"seed_rule", kSeedRule},
      {"wall_clock_seconds", wall},
      {"rows", data.rows.size()},
      {"files", {{"samples", "samples.csv"}, {"summary", "summary.json"}}},
      {"summary", data.summary},
      {"criteria", criteria},
      {"warnings", data.warnings}};
  write_file(dir / "manifest.json", result.manifest.dump(2) + "\n");
  result.manifest_path = dir / "manifest.json";
  return result;
}

struct VerifyReport {
  int exit_code = 0;  // 0 pass, 1 criterion failure or tamper, 2 usage, 3 I/O
  nlohmann::json report;
};

// Re-derives the whole run from the manifest's config echo and compares the
// stored artifacts byte for byte, then re-evaluates the criteria. Any edit of
// samples.csv or summary.json shows up as a reproduction mismatch.
inline VerifyReport verify(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot read manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw IoError("manifest parse error: " + std::string(e.what()));
  }

  ExperimentConfig cfg;
  try {
    cfg = manifest.at("config").get<ExperimentConfig>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("manifest config malformed: " + std::string(e.what()));
  }

  const fs::path dir = manifest_path.parent_path();
  auto read_file = [&](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("missing data file " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string csv_on_disk =
      read_file(dir / manifest.at("files").at("samples").get<std::string>());
  const std::string summary_on_disk =
      read_file(dir / manifest.at("files").at("summary").get<std::string>());

  ComputedRun recomputed = compute(cfg);

  VerifyReport out;
  bool samples_match = render_csv(recomputed.rows) == csv_on_disk;
  bool summary_match = recomputed.summary.dump(2) + "\n" == summary_on_disk;
  bool manifest_summary_match =
      manifest.contains("summary") && manifest.at("summary") == recomputed.summary;

  nlohmann::json criteria = nlohmann::json::array();
  bool all_pass = true;
  for (const auto& c : recomputed.criteria) {
    criteria.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    all_pass = all_pass && c.pass;
  }

  const bool intact = samples_match && summary_match && manifest_summary_match;
  out.report = nlohmann::json{{"manifest", manifest_path.string()},
                              {"config", cfg},
                              {"samples_reproduced", samples_match},
                              {"summary_reproduced", summary_match},
                              {"manifest_summary_consistent", manifest_summary_match},
                              {"criteria", criteria},
                              {"warnings", recomputed.warnings},
                              {"pass", intact && all_pass}};
  out.exit_code = (intact && all_pass) ? 0 : 1;
  return out;
}

}  // namespace cubetimes
