#pragma once

// Closed-loop experiments and their aggregates: frisbee avoidance runs,
// Monte Carlo batches, the pendulum coverage demo and synthetic score
// streams for the coverage bound.

#include <cstdint>
#include <optional>
#include <vector>

#include "acpmpc/config.hpp"

namespace acpmpc {

struct StepRow {
  double t = 0.0;
  int step = 0;
  RotorState robot = RotorState::Zero();
  Vec3 obstacle = Vec3::Zero();
  Vec3 observation = Vec3::Zero();
  std::vector<Vec3> predictions;  // yhat_t^1..H
  std::vector<double> regions;    // C^1..H used by the planner
  std::vector<double> deltas;     // delta_{t+1}^tau
  std::vector<int> err_flags;     // e_t^tau, -1 if none
  bool feasible = true;
  double dist = 0.0;              // robot-obstacle centre distance at t
  RotorInput input = RotorInput::Zero();  // not exported
};

struct RunRecord {
  std::uint64_t seed = 0;
  UqMethod method = UqMethod::acp;
  std::vector<StepRow> rows;
};

// Everything a summary needs beyond the rows themselves.
struct SummaryParams {
  int horizon = 10;
  double d_safe = 0.5;
  double delta = 0.05;
  double gamma = 0.0008;  // smallest learning rate, for the reference band
  double r_max = 1.0;
};
SummaryParams summary_params(const ExperimentConfig& c);

struct CoverageBand {
  double delta = 0.0;
  double gamma = 0.0;
  double T = 0.0;  // mean number of one-step updates per run
  double p1 = 0.0, p2 = 0.0;
  double lower = 0.0, upper = 0.0;  // miscoverage in [delta - p2, delta + p1]
};

struct SummaryStats {
  int runs = 0;
  int feasible_runs = 0;
  int collisions_in_feasible = 0;
  double pct_feasible_run = 0.0;
  double pct_feasible_solve = 0.0;
  double pct_success = 0.0;  // NaN when no run was feasible
  double dmin_mean = 0.0;
  double dmin_std = 0.0;
  std::vector<double> coverage;           // per tau
  std::vector<long long> coverage_count;  // scored steps per tau
  CoverageBand theorem1_band;
  std::vector<bool> miscoverage_in_band;  // per tau
  double safe_step_fraction = 0.0;
  double theorem2_lower = 0.0;
  bool theorem2_holds = false;
};

double run_dmin(const RunRecord& r);
bool run_all_feasible(const RunRecord& r);
bool run_collided(const RunRecord& r, double d_safe);

// Pure fold over the rows; a CSV round trip reproduces it exactly.
SummaryStats summarize(const std::vector<RunRecord>& records, const SummaryParams& p);

// ---------------------------------------------------------------- frisbee

FrisbeeState sample_launch(const ExperimentConfig& c, std::uint64_t seed);

RotorState drone_start_state(const ExperimentConfig& c);

RunRecord run_closed_loop(const ExperimentConfig& c, std::uint64_t seed, UqMethod method);
RunRecord run_closed_loop_from(const ExperimentConfig& c, const FrisbeeState& launch,
                               std::uint64_t seed, UqMethod method);

// Seeds seed_base + i, i < num_runs; results ordered by seed either way.
std::vector<RunRecord> monte_carlo_serial(const ExperimentConfig& c, UqMethod method);
std::vector<RunRecord> monte_carlo_parallel(const ExperimentConfig& c, UqMethod method);

struct MonteCarloResult {
  std::vector<RunRecord> records;
  SummaryStats stats;
  std::optional<std::vector<RunRecord>> baseline_records;
  std::optional<SummaryStats> baseline;
};

MonteCarloResult monte_carlo(const ExperimentConfig& c, bool parallel = true);

// --------------------------------------------------------------- pendulum

struct PendulumTraceRow {
  double t = 0.0;
  Eigen::Vector4d truth = Eigen::Vector4d::Zero();
  Eigen::Vector4d observation = Eigen::Vector4d::Zero();
  // [coordinate][tau-1]
  std::vector<std::vector<double>> prediction, score, region;
  std::vector<std::vector<int>> err_flag;
};

struct PendulumReport {
  int horizon = 0;
  std::vector<std::vector<double>> coverage;         // [coord][tau-1]
  std::vector<std::vector<long long>> updates;       // [coord][tau-1]
  std::vector<double> one_step_coverage;             // per coordinate
  CoverageBand band;                                 // reference, one-step
  std::vector<PendulumTraceRow> rows;
};

inline const char* const kPendulumCoords[4] = {"x1", "y1", "x2", "y2"};

PendulumReport pendulum_coverage_demo(const ExperimentConfig& c, std::uint64_t seed);

// -------------------------------------------------------------- synthetic

struct StreamResult {
  int stream = 0;
  double gamma = 0.0;
  long long T = 0;
  double miscoverage = 0.0;
  double bound = 0.0;     // (max(delta0, 1 - delta0) + gamma) / (T gamma)
  CoverageBound p;
  bool within_bound = false;
  bool within_band = false;  // [delta - p2, delta + p1]
};

// Single-rate recursions on bounded, piecewise-stationary uniform streams;
// one result per (stream, learning rate), stream-major.
std::vector<StreamResult> synthetic_streams_serial(const ExperimentConfig& c);
std::vector<StreamResult> synthetic_streams_parallel(const ExperimentConfig& c);

}  // namespace acpmpc
