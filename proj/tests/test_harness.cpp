#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "acpmpc/export.hpp"
#include "acpmpc/harness.hpp"

using namespace acpmpc;

namespace {

ExperimentConfig small_frisbee(int runs) {
  ExperimentConfig c = default_config(Scenario::frisbee_avoidance);
  c.num_runs = runs;
  c.frisbee.duration = 3.0;
  return c;
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("acpmpc_test_" + name);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_rows(const RunRecord& a, const RunRecord& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const StepRow& x = a.rows[i];
    const StepRow& y = b.rows[i];
    if (x.t != y.t || x.step != y.step || x.robot != y.robot || x.obstacle != y.obstacle ||
        x.observation != y.observation || x.regions != y.regions || x.deltas != y.deltas ||
        x.err_flags != y.err_flags || x.feasible != y.feasible || x.dist != y.dist)
      return false;
    for (std::size_t k = 0; k < x.predictions.size(); ++k)
      if (x.predictions[k] != y.predictions[k]) return false;
  }
  return true;
}

bool same_stats(const SummaryStats& a, const SummaryStats& b) {
  return summary_to_json(a).dump() == summary_to_json(b).dump();
}

}  // namespace

TEST_CASE("launch sampling is seeded and aimed at the drone") {
  const ExperimentConfig c = default_config(Scenario::frisbee_avoidance);
  const FrisbeeState a = sample_launch(c, 5), b = sample_launch(c, 5), d = sample_launch(c, 6);
  CHECK(a.position == b.position);
  CHECK(a.velocity == b.velocity);
  CHECK(a.position != d.position);
  const double D = (a.position - c.frisbee.drone_start).head<2>().norm();
  CHECK(D >= c.frisbee.distance.lo);
  CHECK(D <= c.frisbee.distance.hi);
  const double v = a.velocity.norm();
  CHECK(v >= c.frisbee.speed.lo - 1e-9);
  CHECK(v <= c.frisbee.speed.hi + 1e-9);
  // heading points back towards the drone
  CHECK(a.velocity.head<2>().dot((c.frisbee.drone_start - a.position).head<2>()) > 0.0);
}

TEST_CASE("same seed gives an identical run") {
  const ExperimentConfig c = small_frisbee(1);
  const RunRecord a = run_closed_loop(c, 3, UqMethod::acp);
  const RunRecord b = run_closed_loop(c, 3, UqMethod::acp);
  CHECK(same_rows(a, b));
  const RunRecord e1 = run_closed_loop(c, 3, UqMethod::ekf_gaussian);
  const RunRecord e2 = run_closed_loop(c, 3, UqMethod::ekf_gaussian);
  CHECK(same_rows(e1, e2));
}

TEST_CASE("obstacle thrown away from the drone is harmless") {
  ExperimentConfig c = small_frisbee(1);
  FrisbeeState f;
  f.position = c.frisbee.drone_start + Vec3(10.0, 0.0, 0.0);
  f.velocity = Vec3(12.0, 1.0, 3.0);
  f.disc_normal = disc_normal_for(f.velocity, 0.1);
  const RunRecord r = run_closed_loop_from(c, f, 1, UqMethod::acp);
  CHECK(run_all_feasible(r));
  CHECK_FALSE(run_collided(r, c.mpc.d_safe));
  CHECK(run_dmin(r) >= 9.9);
  const SummaryStats s = summarize({r}, summary_params(c));
  CHECK(s.pct_feasible_run == 100.0);
  CHECK(s.pct_success == 100.0);
}

TEST_CASE("noiseless straight-line obstacle shrinks the regions") {
  ExperimentConfig c = small_frisbee(1);
  c.sigma_obs = 0.0;
  c.frisbee.params.cl0 = c.frisbee.params.cl_alpha = 0.0;
  c.frisbee.params.cd0 = c.frisbee.params.cd_alpha = 0.0;
  c.frisbee.params.g = 0.0;
  FrisbeeState f;
  f.position = c.frisbee.drone_start + Vec3(-12.0, 6.0, 0.0);
  f.velocity = Vec3(4.0, 0.0, 0.0);
  const RunRecord r = run_closed_loop_from(c, f, 1, UqMethod::acp);
  REQUIRE(r.rows.size() > 50);
  for (double reg : r.rows.back().regions) CHECK(reg < 1e-6);
  for (double reg : r.rows.front().regions) CHECK(reg == c.acp.r_max);
}

TEST_CASE("serial and parallel batches agree") {
  const ExperimentConfig c = small_frisbee(3);
  const auto s = monte_carlo_serial(c, UqMethod::acp);
  const auto p = monte_carlo_parallel(c, UqMethod::acp);
  REQUIRE(s.size() == p.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].seed == c.seed_base + i);
    CHECK(same_rows(s[i], p[i]));
  }
}

TEST_CASE("summary equals a hand merge of the runs") {
  const ExperimentConfig c = small_frisbee(3);
  const auto recs = monte_carlo_serial(c, UqMethod::acp);
  const SummaryParams sp = summary_params(c);
  const SummaryStats s = summarize(recs, sp);

  int feasible = 0, collided = 0;
  long long solves = 0, ok = 0;
  double dsum = 0.0;
  std::vector<double> d;
  std::vector<long long> hit(sp.horizon, 0), seen(sp.horizon, 0);
  for (const auto& r : recs) {
    bool all = true;
    double dm = INFINITY;
    for (const auto& row : r.rows) {
      ++solves;
      ok += row.feasible;
      all = all && row.feasible;
      dm = std::min(dm, row.dist);
      for (int tau = 0; tau < sp.horizon; ++tau) {
        if (row.err_flags[tau] < 0) continue;
        ++seen[tau];
        hit[tau] += row.err_flags[tau] == 0;
      }
    }
    feasible += all;
    if (all && dm < sp.d_safe) ++collided;
    d.push_back(dm);
    dsum += dm;
  }
  CHECK(s.runs == 3);
  CHECK(s.feasible_runs == feasible);
  CHECK(s.collisions_in_feasible == collided);
  CHECK(s.pct_feasible_solve == doctest::Approx(100.0 * ok / solves));
  CHECK(s.dmin_mean == doctest::Approx(dsum / 3.0));
  double var = 0.0;
  for (double x : d) var += (x - dsum / 3.0) * (x - dsum / 3.0);
  CHECK(s.dmin_std == doctest::Approx(std::sqrt(var / 2.0)));
  for (int tau = 0; tau < sp.horizon; ++tau) {
    CHECK(s.coverage_count[tau] == seen[tau]);
    if (seen[tau]) CHECK(s.coverage[tau] == doctest::Approx(double(hit[tau]) / seen[tau]));
  }
}

TEST_CASE("runlog round trip reproduces the summary") {
  const ExperimentConfig c = small_frisbee(2);
  const auto recs = monte_carlo_serial(c, UqMethod::acp);
  const std::string dir = temp_dir("roundtrip");
  const std::string path = dir + "/runlog.csv";
  write_runlog_csv(path, recs, c.mpc.horizon);
  const auto back = read_runlog_csv(path);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(same_rows(recs[i], back[i]));
  CHECK(same_stats(summarize(recs, summary_params(c)), summarize(back, summary_params(c))));

  // writing twice is byte-identical
  const std::string first = slurp(path);
  write_runlog_csv(path, recs, c.mpc.horizon);
  CHECK(slurp(path) == first);
}

TEST_CASE("runlog schema") {
  const auto cols = runlog_columns(2);
  const std::vector<std::string> expect{
      "t",       "step",    "robot_x",   "robot_y",   "robot_z",     "robot_vx",  "robot_vy",
      "robot_vz", "robot_phi", "robot_theta", "robot_psi", "robot_p", "robot_q",  "robot_r",
      "obst_x",  "obst_y",  "obst_z",    "obs_x",     "obs_y",       "obs_z",     "pred_1_x",
      "pred_1_y", "pred_1_z", "region_1", "delta_1",  "err_flag_1",  "pred_2_x",  "pred_2_y",
      "pred_2_z", "region_2", "delta_2",  "err_flag_2", "feasible",  "dist"};
  CHECK(cols == expect);

  const std::string dir = temp_dir("empty");
  write_runlog_csv(dir + "/empty.csv", {}, 2);
  std::ifstream in(dir + "/empty.csv");
  std::string header, extra;
  std::getline(in, header);
  CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
  CHECK(header.rfind("t,step,robot_x", 0) == 0);
  CHECK(read_runlog_csv(dir + "/empty.csv").empty());

  std::ofstream bad(dir + "/bad.csv");
  bad << "t,step,foo\n0,0,1\n";
  bad.close();
  CHECK_THROWS_AS(read_runlog_csv(dir + "/bad.csv"), ExportError);
  CHECK_THROWS_AS(read_runlog_csv(dir + "/missing.csv"), ExportError);
}

TEST_CASE("summary document keys") {
  ExperimentConfig c = small_frisbee(1);
  const auto recs = monte_carlo_serial(c, UqMethod::acp);
  const SummaryStats s = summarize(recs, summary_params(c));
  const auto j = summary_document(s, &s, c);
  for (const char* k : {"pct_feasible_run", "pct_feasible_solve", "pct_success", "dmin_mean",
                        "dmin_std", "coverage", "theorem1_band"})
    CHECK(j.contains(k));
  CHECK(j["coverage"].size() == static_cast<std::size_t>(c.mpc.horizon));
  CHECK(j.contains("ekf_baseline"));
  CHECK(summary_to_json(SummaryStats{})["pct_success"].is_null() ==
        std::isnan(SummaryStats{}.pct_success));
}

TEST_CASE("empty batch summary") {
  const SummaryStats s = summarize({}, SummaryParams{});
  CHECK(s.runs == 0);
  CHECK(std::isnan(s.pct_success));
}

TEST_CASE("synthetic streams sit inside the deterministic bound") {
  ExperimentConfig c = default_config(Scenario::synthetic_scores);
  c.synthetic.streams = 3;
  c.synthetic.steps = 2000;
  const auto a = synthetic_streams_serial(c);
  const auto b = synthetic_streams_parallel(c);
  REQUIRE(a.size() == 3 * c.acp.learning_rates.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].within_bound);
    CHECK(a[i].miscoverage == b[i].miscoverage);
    CHECK(std::abs(a[i].miscoverage - c.acp.target_miscoverage) <= a[i].bound);
  }
}

TEST_CASE("pendulum demo report shape") {
  ExperimentConfig c = default_config(Scenario::pendulum_demo);
  c.pendulum.steps = 300;
  const PendulumReport r = pendulum_coverage_demo(c, 1);
  CHECK(r.rows.size() == 300);
  CHECK(r.coverage.size() == 4);
  CHECK(r.coverage[0].size() == static_cast<std::size_t>(c.predictor.horizon));
  for (double v : r.one_step_coverage) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const PendulumReport again = pendulum_coverage_demo(c, 1);
  CHECK(again.one_step_coverage == r.one_step_coverage);
}
