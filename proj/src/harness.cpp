#include "acpmpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace acpmpc {

namespace {

// Separate, reproducible streams per purpose from one run seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return std::mt19937_64(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_rng(seed, stream);
  return rng();
}

double uniform(std::mt19937_64& rng, const Range& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

CoverageBand make_band(double T, double gamma, double delta) {
  CoverageBand b;
  b.delta = delta;
  b.gamma = gamma;
  b.T = T;
  if (T > 0.0 && gamma > 0.0) {
    b.p1 = (delta + gamma) / (T * gamma);
    b.p2 = ((1.0 - delta) + gamma) / (T * gamma);
  } else {
    b.p1 = b.p2 = std::numeric_limits<double>::infinity();
  }
  b.lower = delta - b.p2;
  b.upper = delta + b.p1;
  return b;
}

double smallest_rate(const AcpParams& p) {
  return *std::min_element(p.learning_rates.begin(), p.learning_rates.end());
}

}  // namespace

SummaryParams summary_params(const ExperimentConfig& c) {
  SummaryParams p;
  p.horizon = c.mpc.horizon;
  p.d_safe = c.mpc.d_safe;
  p.delta = c.acp.target_miscoverage;
  p.gamma = smallest_rate(c.acp);
  p.r_max = c.acp.r_max;
  return p;
}

double run_dmin(const RunRecord& r) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& row : r.rows) d = std::min(d, row.dist);
  return d;
}

bool run_all_feasible(const RunRecord& r) {
  return std::all_of(r.rows.begin(), r.rows.end(), [](const StepRow& s) { return s.feasible; });
}

bool run_collided(const RunRecord& r, double d_safe) {
  return std::any_of(r.rows.begin(), r.rows.end(),
                     [&](const StepRow& s) { return s.dist < d_safe; });
}

SummaryStats summarize(const std::vector<RunRecord>& records, const SummaryParams& p) {
  SummaryStats s;
  s.runs = static_cast<int>(records.size());
  const auto H = static_cast<std::size_t>(p.horizon);
  std::vector<long long> errs(H, 0), counts(H, 0);
  long long solves = 0, feasible_solves = 0, safe_steps = 0, steps = 0;
  std::vector<double> dmins;
  bool all_steps_feasible = true;
  for (const auto& r : records) {
    const bool feas = run_all_feasible(r);
    all_steps_feasible = all_steps_feasible && feas;
    if (feas) {
      ++s.feasible_runs;
      if (run_collided(r, p.d_safe)) ++s.collisions_in_feasible;
    }
    if (!r.rows.empty()) dmins.push_back(run_dmin(r));
    for (const auto& row : r.rows) {
      ++solves;
      if (row.feasible) ++feasible_solves;
      ++steps;
      if (row.dist >= p.d_safe) ++safe_steps;
      for (std::size_t k = 0; k < H && k < row.err_flags.size(); ++k) {
        if (row.err_flags[k] < 0) continue;
        ++counts[k];
        errs[k] += row.err_flags[k];
      }
    }
  }
  s.pct_feasible_run = s.runs ? 100.0 * s.feasible_runs / s.runs : 0.0;
  s.pct_feasible_solve = solves ? 100.0 * static_cast<double>(feasible_solves) / solves : 0.0;
  s.pct_success = s.feasible_runs
                      ? 100.0 * (s.feasible_runs - s.collisions_in_feasible) / s.feasible_runs
                      : std::numeric_limits<double>::quiet_NaN();
  if (!dmins.empty()) {
    const double n = static_cast<double>(dmins.size());
    s.dmin_mean = std::accumulate(dmins.begin(), dmins.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : dmins) ss += (d - s.dmin_mean) * (d - s.dmin_mean);
    s.dmin_std = dmins.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  s.coverage.assign(H, std::numeric_limits<double>::quiet_NaN());
  s.coverage_count = counts;
  for (std::size_t k = 0; k < H; ++k)
    if (counts[k] > 0) s.coverage[k] = 1.0 - static_cast<double>(errs[k]) / counts[k];

  const double T = s.runs ? static_cast<double>(counts.empty() ? 0 : counts[0]) / s.runs : 0.0;
  s.theorem1_band = make_band(T, p.gamma, p.delta);
  s.miscoverage_in_band.assign(H, false);
  for (std::size_t k = 0; k < H; ++k) {
    if (counts[k] == 0) continue;
    const double m = 1.0 - s.coverage[k];
    s.miscoverage_in_band[k] = m >= s.theorem1_band.lower && m <= s.theorem1_band.upper;
  }
  s.safe_step_fraction = steps ? static_cast<double>(safe_steps) / steps : 0.0;
  s.theorem2_lower = 1.0 - p.delta - s.theorem1_band.p1;
  s.theorem2_holds = all_steps_feasible && s.safe_step_fraction >= s.theorem2_lower;
  return s;
}

// ---------------------------------------------------------------- frisbee

namespace {

// Height above the target when the disc has covered `distance` along
// `heading`; -inf if it never gets there.
double crossing_height(const FrisbeeParams& fp, Vec3 p0, const Vec3& heading, double speed,
                       double elevation, double attack, double distance, double target_z,
                       double dt) {
  FrisbeeState s;
  s.position = p0;
  s.velocity = speed * (std::cos(elevation) * heading + std::sin(elevation) * Vec3::UnitZ());
  s.disc_normal = disc_normal_for(s.velocity, attack);
  double prev_along = 0.0, prev_z = p0.z();
  for (int i = 0; i < 20000; ++i) {
    s = frisbee_step(s, fp, dt);
    const double along = (s.position - p0).dot(heading);
    if (along >= distance) {
      const double w = (distance - prev_along) / std::max(along - prev_along, 1e-12);
      return prev_z + w * (s.position.z() - prev_z) - target_z;
    }
    if (s.position.z() < target_z - 50.0 || along < prev_along - 1e-9) break;
    prev_along = along;
    prev_z = s.position.z();
  }
  return -std::numeric_limits<double>::infinity();
}

}  // namespace

RotorState drone_start_state(const ExperimentConfig& c) {
  RotorState x = RotorState::Zero();
  x.head<3>() = c.frisbee.drone_start;
  return x;
}

FrisbeeState sample_launch(const ExperimentConfig& c, std::uint64_t seed) {
  const FrisbeeScenario& f = c.frisbee;
  auto rng = make_rng(seed, 1);
  const double D = uniform(rng, f.distance);
  const double az = uniform(rng, f.azimuth);
  const double dh = uniform(rng, f.height_offset);
  const double v = uniform(rng, f.speed);
  const double attack = uniform(rng, f.attack);
  const double spin = uniform(rng, f.spin);
  const double u_cone = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double roll_cone = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);

  const Vec3 target = f.drone_start;
  const Vec3 p0 = target + Vec3(D * std::cos(az), D * std::sin(az), dh);
  const Vec3 heading = Vec3(-std::cos(az), -std::sin(az), 0.0);
  const double dt = c.mpc.dt / f.substeps;

  // Elevation that brings the nominal flight through the drone, on the lofted
  // branch: the highest elevation whose flight still reaches the drone's
  // height at distance D. The crossing height is not monotone in elevation,
  // so scan downwards before bisecting.
  const double lo = -0.6, hi = 1.2;
  auto g = [&](double e) {
    return crossing_height(f.params, p0, heading, v, e, attack, D, target.z(), dt);
  };
  constexpr int kScan = 36;
  double elev = hi, best = -std::numeric_limits<double>::infinity();
  double prev_e = hi;
  if (g(hi) >= 0.0) {
    elev = hi;
  } else {
    for (int i = 1; i <= kScan; ++i) {
      const double e = hi - (hi - lo) * i / kScan;
      const double ge = g(e);
      if (ge > best) best = ge, elev = e;
      if (ge >= 0.0) {
        double a = e, b = prev_e;  // g(a) >= 0 > g(b)
        for (int k = 0; k < 50; ++k) {
          const double mid = 0.5 * (a + b);
          (g(mid) >= 0.0 ? a : b) = mid;
        }
        elev = a;
        break;
      }
      prev_e = e;
    }
  }
  Vec3 dir = std::cos(elev) * heading + std::sin(elev) * Vec3::UnitZ();

  // Uniform direction inside the aim cone.
  const double cos_a = 1.0 - u_cone * (1.0 - std::cos(f.aim_cone));
  const double a = std::acos(std::clamp(cos_a, -1.0, 1.0));
  const Vec3 side = dir.cross(Vec3::UnitZ()).normalized();
  const Vec3 up = side.cross(dir).normalized();
  dir = (std::cos(a) * dir + std::sin(a) * (std::cos(roll_cone) * side + std::sin(roll_cone) * up))
            .normalized();

  FrisbeeState s;
  s.position = p0;
  s.velocity = v * dir;
  s.spin_rate = spin;
  s.disc_normal = disc_normal_for(s.velocity, attack);
  return s;
}

RunRecord run_closed_loop(const ExperimentConfig& c, std::uint64_t seed, UqMethod method) {
  return run_closed_loop_from(c, sample_launch(c, seed), seed, method);
}

RunRecord run_closed_loop_from(const ExperimentConfig& c, const FrisbeeState& launch,
                               std::uint64_t seed, UqMethod method) {
  RunRecord rec;
  rec.seed = seed;
  rec.method = method;
  const int H = c.mpc.horizon;
  Planner planner(c.mpc, c.predictor, c.acp, method, c.sigma_obs);
  Observer observer(NoiseSpec{c.sigma_obs, derive_seed(seed, 2)});
  const DiscreteLinearModel model = discretize_multirotor(c.mpc.vehicle, c.mpc.dt);
  const double sub_dt = c.mpc.dt / c.frisbee.substeps;

  RotorState x = drone_start_state(c);
  FrisbeeState disc = launch;
  const int steps = static_cast<int>(std::lround(c.frisbee.duration / c.mpc.dt));
  rec.rows.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    StepRow row;
    row.t = k * c.mpc.dt;
    row.step = k;
    row.robot = x;
    row.obstacle = disc.position;
    row.observation = observer.observe(disc.position).head<3>();
    row.dist = (x.head<3>() - disc.position).norm();

    StepOutput out = planner.step(x, row.observation);
    const StepDiagnostics& d = out.diagnostics;
    row.predictions = d.predictions;
    row.regions = d.regions;
    row.deltas = d.delta_levels;
    row.err_flags = d.error_flags;
    row.feasible = out.plan.status == PlanStatus::feasible;
    row.input = out.input;
    row.predictions.resize(static_cast<std::size_t>(H), Vec3::Zero());
    rec.rows.push_back(std::move(row));

    if (rec.rows.back().dist < c.mpc.d_safe) break;  // collision ends the run
    x = model.step(x, out.input);
    for (int j = 0; j < c.frisbee.substeps; ++j) disc = frisbee_step(disc, c.frisbee.params, sub_dt);
    if (disc.position.z() < 0.0) break;  // landed
  }
  return rec;
}

namespace {

std::vector<RunRecord> mc_impl(const ExperimentConfig& c, UqMethod method, bool parallel) {
  if (c.num_runs < 1) throw std::invalid_argument("monte_carlo: num_runs must be >= 1");
  std::vector<RunRecord> out(static_cast<std::size_t>(c.num_runs));
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < c.num_runs; ++i)
      out[i] = run_closed_loop(c, c.seed_base + static_cast<std::uint64_t>(i), method);
  } else {
    for (int i = 0; i < c.num_runs; ++i)
      out[i] = run_closed_loop(c, c.seed_base + static_cast<std::uint64_t>(i), method);
  }
  return out;
}

}  // namespace

std::vector<RunRecord> monte_carlo_serial(const ExperimentConfig& c, UqMethod method) {
  return mc_impl(c, method, false);
}

std::vector<RunRecord> monte_carlo_parallel(const ExperimentConfig& c, UqMethod method) {
  return mc_impl(c, method, true);
}

MonteCarloResult monte_carlo(const ExperimentConfig& c, bool parallel) {
  MonteCarloResult r;
  const SummaryParams sp = summary_params(c);
  r.records = mc_impl(c, c.uq_method, parallel);
  r.stats = summarize(r.records, sp);
  if (c.compare_ekf && c.uq_method != UqMethod::ekf_gaussian) {
    r.baseline_records = mc_impl(c, UqMethod::ekf_gaussian, parallel);
    r.baseline = summarize(*r.baseline_records, sp);
  }
  return r;
}

// --------------------------------------------------------------- pendulum

PendulumReport pendulum_coverage_demo(const ExperimentConfig& c, std::uint64_t seed) {
  const int H = c.predictor.horizon;
  constexpr int D = 4;
  PendulumReport rep;
  rep.horizon = H;
  SlidingPredictor predictor(c.predictor, D, c.sigma_obs);
  std::vector<MultiStepAcp> acp;
  for (int i = 0; i < D; ++i) acp.emplace_back(c.acp, H);
  Observer observer(NoiseSpec{c.sigma_obs, derive_seed(seed, 3)});

  std::vector<std::vector<long long>> errs(D, std::vector<long long>(H, 0));
  rep.updates.assign(D, std::vector<long long>(H, 0));
  PendulumState s = c.pendulum.initial;
  rep.rows.reserve(static_cast<std::size_t>(c.pendulum.steps));
  for (int k = 0; k < c.pendulum.steps; ++k) {
    PendulumTraceRow row;
    row.t = k * c.pendulum.dt;
    row.truth = pendulum_observables(s, c.pendulum.params);
    row.observation = observer.observe(row.truth);
    const std::vector<Eigen::VectorXd> preds = predictor.observe(row.observation);
    row.prediction.assign(D, std::vector<double>(H, std::numeric_limits<double>::quiet_NaN()));
    row.score = row.prediction;
    row.region = row.prediction;
    row.err_flag.assign(D, std::vector<int>(H, -1));
    for (int i = 0; i < D; ++i) {
      std::vector<Eigen::VectorXd> mine;
      if (!preds.empty())
        for (int tau = 0; tau < H; ++tau) mine.emplace_back(Eigen::VectorXd::Constant(1, preds[tau](i)));
      const auto& recs = acp[i].step(row.observation.segment<1>(i), mine);
      for (int tau = 0; tau < H; ++tau) {
        if (!mine.empty()) row.prediction[i][tau] = mine[tau](0);
        if (recs[tau].score) row.score[i][tau] = *recs[tau].score;
        row.region[i][tau] = recs[tau].region.radius;
        row.err_flag[i][tau] = recs[tau].error_flag;
        if (recs[tau].error_flag >= 0) {
          ++rep.updates[i][tau];
          errs[i][tau] += recs[tau].error_flag;
        }
      }
    }
    rep.rows.push_back(std::move(row));
    s = pendulum_step(s, c.pendulum.params, c.pendulum.dt);
  }
  rep.coverage.assign(D, std::vector<double>(H, std::numeric_limits<double>::quiet_NaN()));
  rep.one_step_coverage.assign(D, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < D; ++i) {
    for (int tau = 0; tau < H; ++tau)
      if (rep.updates[i][tau] > 0)
        rep.coverage[i][tau] = 1.0 - static_cast<double>(errs[i][tau]) / rep.updates[i][tau];
    rep.one_step_coverage[i] = rep.coverage[i][0];
  }
  rep.band = make_band(static_cast<double>(rep.updates[0][0]), smallest_rate(c.acp),
                       c.acp.target_miscoverage);
  return rep;
}

// -------------------------------------------------------------- synthetic

namespace {

StreamResult run_stream(const ExperimentConfig& c, int stream, double gamma) {
  AcpParams p = c.acp;
  p.learning_rates = {gamma};
  AcpTauState st = AcpTauState::initial(p, 1);
  auto rng = make_rng(c.seed_base + static_cast<std::uint64_t>(stream), 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double top = std::min(c.synthetic.score_scale, p.r_max);
  const int T = c.synthetic.steps;
  long long errors = 0;
  for (int t = 0; t < T; ++t) {
    // Three regimes so the level has something to track.
    const double scale = t < T / 3 ? 0.3 * top : (t < 2 * T / 3 ? top : 0.6 * top);
    const double score = scale * unit(rng);
    const PredictionRegion region = empirical_quantile(st.window, effective_level(st), p.r_max);
    errors += acp_update(st, p, score, region);
  }
  StreamResult r;
  r.stream = stream;
  r.gamma = gamma;
  r.T = T;
  r.miscoverage = static_cast<double>(errors) / T;
  const double d0 = p.target_miscoverage;
  r.bound = miscoverage_deviation_bound(static_cast<std::size_t>(T), gamma, d0);
  r.p = coverage_bound(static_cast<std::size_t>(T), gamma, d0);
  r.within_bound = std::abs(r.miscoverage - p.target_miscoverage) <= r.bound;
  r.within_band = r.miscoverage >= p.target_miscoverage - r.p.p2 &&
                  r.miscoverage <= p.target_miscoverage + r.p.p1;
  return r;
}

std::vector<StreamResult> streams_impl(const ExperimentConfig& c, bool parallel) {
  const int S = c.synthetic.streams;
  const auto& rates = c.acp.learning_rates;
  const int G = static_cast<int>(rates.size());
  std::vector<StreamResult> out(static_cast<std::size_t>(S * G));
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < S * G; ++k) out[k] = run_stream(c, k / G, rates[k % G]);
  } else {
    for (int k = 0; k < S * G; ++k) out[k] = run_stream(c, k / G, rates[k % G]);
  }
  return out;
}

}  // namespace

std::vector<StreamResult> synthetic_streams_serial(const ExperimentConfig& c) {
  return streams_impl(c, false);
}

std::vector<StreamResult> synthetic_streams_parallel(const ExperimentConfig& c) {
  return streams_impl(c, true);
}

}  // namespace acpmpc
