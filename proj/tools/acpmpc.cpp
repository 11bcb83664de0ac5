// acpmpc: pendulum coverage demo, frisbee avoidance runs, Monte Carlo
// batches and coverage reports.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acpmpc/config.hpp"
#include "acpmpc/export.hpp"
#include "acpmpc/harness.hpp"

using namespace acpmpc;

namespace {

constexpr const char* kOutEnv = "ACPMPC_OUT_DIR";

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::optional<std::size_t> window;
  std::string gammas;
  std::optional<std::string> out;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON experiment config (defaults used when omitted)");
  sub->add_option("--seed", c.seed, "seed base; overrides seed_base");
  sub->add_option("--delta", c.delta, "target miscoverage in (0,1)");
  sub->add_option("--window", c.window, "conformal score window length N");
  sub->add_option("--gammas", c.gammas, "comma-separated learning rates");
  sub->add_option("--out", c.out,
                  std::string("output directory (default: config output.dir, else $") + kOutEnv +
                      ", else ./out)");
  sub->add_flag("-v,--verbose", c.verbose, "print a short report to stdout");
}

std::vector<double> parse_gammas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad learning rate '" + tok + "'", 0, "--gammas");
    }
  }
  if (out.empty()) throw ConfigError("empty list", 0, "--gammas");
  return out;
}

bool file_sets_output_dir(const std::string& path) {
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  return j.is_object() && j.contains("output") && j["output"].is_object() &&
         j["output"].contains("dir");
}

// Config file (or scenario defaults), then flag overrides.
ExperimentConfig resolve(const Common& c, Scenario expected) {
  ExperimentConfig cfg = default_config(expected);
  bool out_from_file = false;
  if (!c.config_path.empty()) {
    cfg = load_config(c.config_path);
    if (cfg.scenario != expected)
      throw ConfigError(std::string("config scenario is '") + to_string(cfg.scenario) +
                            "' but this command runs '" + to_string(expected) + "'",
                        0, "scenario");
    out_from_file = file_sets_output_dir(c.config_path);
  }
  if (c.seed) cfg.seed_base = *c.seed;
  if (c.delta) cfg.acp.target_miscoverage = *c.delta;
  if (c.window) cfg.acp.window_size = *c.window;
  if (!c.gammas.empty()) cfg.acp.learning_rates = parse_gammas(c.gammas);
  if (c.out) {
    cfg.output_dir = *c.out;
  } else if (!out_from_file) {
    if (const char* env = std::getenv(kOutEnv); env && *env) cfg.output_dir = env;
  }
  cfg.validate();
  return cfg;
}

std::string join(const std::string& dir, const char* file) {
  return dir.empty() ? file : dir + "/" + file;
}

void report_summary(const char* label, const SummaryStats& s) {
  std::cout << label << ": runs=" << s.runs << " feasible_run%=" << s.pct_feasible_run
            << " feasible_solve%=" << s.pct_feasible_solve << " success%=" << s.pct_success
            << " dmin=" << s.dmin_mean << " +- " << s.dmin_std << "\n  coverage:";
  for (double v : s.coverage) std::cout << ' ' << v;
  std::cout << '\n';
}

int cmd_pendulum(const Common& c) {
  const ExperimentConfig cfg = resolve(c, Scenario::pendulum_demo);
  const PendulumReport rep = pendulum_coverage_demo(cfg, cfg.seed_base);
  ensure_directory(cfg.output_dir);
  write_pendulum_csv(join(cfg.output_dir, "pendulum_traces.csv"), rep);
  write_json(join(cfg.output_dir, "pendulum_summary.json"), pendulum_summary(rep, cfg));
  if (c.verbose) {
    std::cout << "one-step coverage:";
    for (int i = 0; i < 4; ++i)
      std::cout << ' ' << kPendulumCoords[i] << '=' << rep.one_step_coverage[i];
    std::cout << "\nwrote " << join(cfg.output_dir, "pendulum_traces.csv") << '\n';
  }
  return 0;
}

int cmd_simulate(const Common& c, const std::string& method) {
  ExperimentConfig cfg = resolve(c, Scenario::frisbee_avoidance);
  if (!method.empty()) cfg.uq_method = parse_uq_method(method);
  const RunRecord rec = run_closed_loop(cfg, cfg.seed_base, cfg.uq_method);
  const SummaryStats s = summarize({rec}, summary_params(cfg));
  ensure_directory(cfg.output_dir);
  write_runlog_csv(join(cfg.output_dir, "runlog.csv"), {rec}, cfg.mpc.horizon);
  write_json(join(cfg.output_dir, "summary.json"), summary_document(s, nullptr, cfg));
  if (c.verbose) report_summary(to_string(cfg.uq_method), s);
  return 0;
}

int cmd_montecarlo(const Common& c, std::optional<int> runs, const std::string& method,
                   bool serial, bool no_baseline) {
  ExperimentConfig cfg = resolve(c, Scenario::frisbee_avoidance);
  if (runs) cfg.num_runs = *runs;
  if (!method.empty()) cfg.uq_method = parse_uq_method(method);
  if (no_baseline) cfg.compare_ekf = false;
  cfg.validate();
  const MonteCarloResult r = monte_carlo(cfg, !serial);
  ensure_directory(cfg.output_dir);
  write_runlog_csv(join(cfg.output_dir, "runlog.csv"), r.records, cfg.mpc.horizon);
  if (r.baseline_records)
    write_runlog_csv(join(cfg.output_dir, "runlog_ekf.csv"), *r.baseline_records,
                     cfg.mpc.horizon);
  write_json(join(cfg.output_dir, "summary.json"),
             summary_document(r.stats, r.baseline ? &*r.baseline : nullptr, cfg));
  if (c.verbose) {
    report_summary(to_string(cfg.uq_method), r.stats);
    if (r.baseline) report_summary("ekf_gaussian", *r.baseline);
  }
  return 0;
}

int cmd_coverage(const Common& c, const std::string& runlog) {
  if (!runlog.empty()) {
    // Recompute coverage from an existing log; the config supplies d_safe and delta.
    const ExperimentConfig cfg = resolve(c, Scenario::frisbee_avoidance);
    const auto recs = read_runlog_csv(runlog);
    SummaryParams p = summary_params(cfg);
    if (!recs.empty() && !recs.front().rows.empty())
      p.horizon = static_cast<int>(recs.front().rows.front().err_flags.size());
    const SummaryStats s = summarize(recs, p);
    std::cout << summary_to_json(s).dump(2) << '\n';
    return 0;
  }
  const ExperimentConfig cfg = resolve(c, Scenario::synthetic_scores);
  const auto res = synthetic_streams_parallel(cfg);
  ensure_directory(cfg.output_dir);
  write_streams_csv(join(cfg.output_dir, "coverage_streams.csv"), res);
  const auto doc = streams_summary(res, cfg);
  write_json(join(cfg.output_dir, "coverage_summary.json"), doc);
  if (c.verbose)
    std::cout << doc["within_bound"].get<int>() << '/' << doc["cases"].get<std::size_t>()
              << " streams inside the deterministic bound\n";
  return 0;
}

int cmd_print_config(const Common& c, const std::string& scenario) {
  const Scenario s = scenario.empty() ? Scenario::frisbee_avoidance : parse_scenario(scenario);
  Common cc = c;
  Scenario expect = s;
  if (!c.config_path.empty() && scenario.empty()) expect = load_config(c.config_path).scenario;
  const ExperimentConfig cfg = resolve(cc, expect);
  std::cout << to_json(cfg).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive conformal prediction regions for MPC obstacle avoidance"};
  app.require_subcommand(1);

  Common pend, sim, mc, cov, pc;
  auto* p_pend = app.add_subcommand("pendulum-demo", "noisy double pendulum, per-coordinate regions");
  add_common(p_pend, pend);

  std::string sim_method;
  auto* p_sim = app.add_subcommand("simulate", "one frisbee avoidance run");
  add_common(p_sim, sim);
  p_sim->add_option("--method", sim_method, "acp | ekf_gaussian");

  std::optional<int> runs;
  std::string mc_method;
  bool serial = false, no_baseline = false;
  auto* p_mc = app.add_subcommand("montecarlo", "seeded batch of frisbee runs");
  add_common(p_mc, mc);
  p_mc->add_option("--runs", runs, "number of runs; overrides num_runs")->check(CLI::PositiveNumber);
  p_mc->add_option("--method", mc_method, "acp | ekf_gaussian");
  p_mc->add_flag("--serial", serial, "run the batch on one thread");
  p_mc->add_flag("--no-baseline", no_baseline, "skip the EKF-Gaussian comparison batch");

  std::string runlog;
  auto* p_cov = app.add_subcommand("coverage-report",
                                   "coverage of synthetic bounded streams, or of a saved runlog");
  add_common(p_cov, cov);
  p_cov->add_option("--runlog", runlog, "recompute coverage from this runlog.csv");

  std::string scenario;
  auto* p_pc = app.add_subcommand("print-config", "print the effective config as JSON");
  add_common(p_pc, pc);
  p_pc->add_option("--scenario", scenario, "pendulum-demo | frisbee-avoidance | synthetic-scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*p_pend) return cmd_pendulum(pend);
    if (*p_sim) return cmd_simulate(sim, sim_method);
    if (*p_mc) return cmd_montecarlo(mc, runs, mc_method, serial, no_baseline);
    if (*p_cov) return cmd_coverage(cov, runlog);
    if (*p_pc) return cmd_print_config(pc, scenario);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
