#include "acpmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace acpmpc {

namespace {

constexpr int kPos = 0;    // x y z
constexpr int kAtt = 6;    // phi theta psi
constexpr double kTiny = 1e-12;

bool finite_vec(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

}  // namespace

MpcConfig MpcConfig::defaults() {
  MpcConfig c;
  c.q_diag << 10, 10, 10, 1, 1, 1, 0.5, 0.5, 0.5, 0.1, 0.1, 0.1;
  c.r_diag << 0.1, 10, 10, 10;
  c.goal.setZero();
  c.u_min << 0.0, -0.3, -0.3, -0.3;
  c.u_max << 2.0 * c.vehicle.g, 0.3, 0.3, 0.3;
  return c;
}

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("mpc.horizon must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("mpc.dt must be positive");
  if ((q_diag.array() < 0.0).any() || !finite_vec(q_diag))
    throw std::invalid_argument("mpc.q_diag must be nonnegative");
  if ((r_diag.array() < 0.0).any() || !finite_vec(r_diag))
    throw std::invalid_argument("mpc.r_diag must be nonnegative");
  if (!(d_safe > 0.0)) throw std::invalid_argument("mpc.d_safe must be positive");
  if (!(lipschitz >= 0.0)) throw std::invalid_argument("mpc.lipschitz must be >= 0");
  if ((u_min.array() > u_max.array()).any())
    throw std::invalid_argument("mpc.u_min must not exceed mpc.u_max");
  if (!(attitude_limit > 0.0)) throw std::invalid_argument("mpc.attitude_limit must be positive");
  if (scp_max_iterations < 1) throw std::invalid_argument("mpc.scp_max_iterations must be >= 1");
  if (!(trust_radius >= 0.0)) throw std::invalid_argument("mpc.trust_radius must be >= 0");
  if (!(min_trust_radius > 0.0)) throw std::invalid_argument("mpc.min_trust_radius must be positive");
  if (!(scp_tolerance > 0.0)) throw std::invalid_argument("mpc.scp_tolerance must be positive");
  if (!(vehicle.ixx > 0.0 && vehicle.iyy > 0.0 && vehicle.izz > 0.0))
    throw std::invalid_argument("mpc.vehicle inertias must be positive");
}

Halfspace linearize_collision(const Vec3& xbar, const Vec3& yhat, double region,
                              double lipschitz, double d_safe,
                              const std::optional<Vec3>& fallback_normal) {
  Halfspace h;
  const Vec3 d = xbar - yhat;
  const double n = d.norm();
  if (n > 1e-9) {
    h.normal = d / n;
  } else {
    h.degenerate = true;
    if (fallback_normal && fallback_normal->norm() > kTiny)
      h.normal = fallback_normal->normalized();
    else
      h.normal = Vec3::UnitZ();
  }
  h.offset = h.normal.dot(yhat) + d_safe + lipschitz * region;
  return h;
}

Trajectory rollout(const DiscreteLinearModel& model, const RotorState& x0,
                   const std::vector<RotorInput>& inputs) {
  Trajectory t;
  t.inputs = inputs;
  t.states.reserve(inputs.size() + 1);
  t.states.push_back(x0);
  for (const auto& u : inputs) t.states.push_back(model.step(t.states.back(), u));
  return t;
}

ConvexSubproblem build_subproblem(const MpcProblem& problem, const MpcConfig& config,
                                  const Trajectory& lin, double trust_radius) {
  const int H = config.horizon;
  if (static_cast<int>(lin.states.size()) != H + 1 || static_cast<int>(lin.inputs.size()) != H)
    throw std::invalid_argument("build_subproblem: linearization trajectory has wrong length");
  const bool has_obstacle = !problem.predictions.empty();
  if (has_obstacle && (static_cast<int>(problem.predictions.size()) != H ||
                       static_cast<int>(problem.regions.size()) != H))
    throw std::invalid_argument("build_subproblem: predictions and regions must have length H");

  const DiscreteLinearModel model = discretize_multirotor(config.vehicle, config.dt);
  const RotorInput uh = hover_input(config.vehicle);
  constexpr int S = ConvexSubproblem::kStride;
  const int n = H * S;

  ConvexSubproblem sub;
  sub.horizon = H;
  QpProblem& qp = sub.qp;
  qp.P = Eigen::MatrixXd::Zero(n, n);
  qp.q = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < H; ++k) {
    const int iu = ConvexSubproblem::input_offset(k);
    const int ix = ConvexSubproblem::state_offset(k);
    for (int j = 0; j < kRotorInputs; ++j) {
      qp.P(iu + j, iu + j) = 2.0 * config.r_diag(j);
      qp.q(iu + j) = -2.0 * config.r_diag(j) * uh(j);
      sub.constant += config.r_diag(j) * uh(j) * uh(j);
    }
    for (int j = 0; j < kRotorStates; ++j) {
      qp.P(ix + j, ix + j) = 2.0 * config.q_diag(j);
      qp.q(ix + j) = -2.0 * config.q_diag(j) * config.goal(j);
      sub.constant += config.q_diag(j) * config.goal(j) * config.goal(j);
    }
  }

  // x_{k+1} - A x_k - B u_k = c
  qp.A_eq = Eigen::MatrixXd::Zero(H * kRotorStates, n);
  qp.b_eq = Eigen::VectorXd::Zero(H * kRotorStates);
  for (int k = 0; k < H; ++k) {
    const int r = k * kRotorStates;
    qp.A_eq.block(r, ConvexSubproblem::state_offset(k), kRotorStates, kRotorStates).setIdentity();
    qp.A_eq.block(r, ConvexSubproblem::input_offset(k), kRotorStates, kRotorInputs) = -model.B;
    if (k == 0)
      qp.b_eq.segment(r, kRotorStates) = model.A * problem.x0 + model.c;
    else {
      qp.A_eq.block(r, ConvexSubproblem::state_offset(k - 1), kRotorStates, kRotorStates) =
          -model.A;
      qp.b_eq.segment(r, kRotorStates) = model.c;
    }
  }

  // input box (8), attitude box (4), collision (1), trust box (6) per step
  const int per_step = 2 * kRotorInputs + 4 + (has_obstacle ? 1 : 0) + 6;
  qp.A_in = Eigen::MatrixXd::Zero(H * per_step, n);
  qp.b_in = Eigen::VectorXd::Zero(H * per_step);
  int row = 0;
  auto add = [&](int col, double coef, double rhs) {
    qp.A_in(row, col) = coef;
    qp.b_in(row) = rhs;
    ++row;
  };
  for (int k = 0; k < H; ++k) {
    const int iu = ConvexSubproblem::input_offset(k);
    const int ix = ConvexSubproblem::state_offset(k);
    for (int j = 0; j < kRotorInputs; ++j) {
      add(iu + j, 1.0, config.u_min(j));
      add(iu + j, -1.0, -config.u_max(j));
    }
    for (int j = 0; j < 2; ++j) {
      add(ix + kAtt + j, 1.0, -config.attitude_limit);
      add(ix + kAtt + j, -1.0, -config.attitude_limit);
    }
    if (has_obstacle) {
      std::optional<Vec3> fb;
      if (static_cast<int>(problem.previous_normals.size()) > k) fb = problem.previous_normals[k];
      const Vec3 pbar = lin.states[k + 1].segment<3>(kPos);
      const Halfspace h = linearize_collision(pbar, problem.predictions[k], problem.regions[k],
                                              config.lipschitz, config.d_safe, fb);
      if (h.degenerate) ++sub.degenerate_linearizations;
      for (int j = 0; j < 3; ++j) qp.A_in(row, ix + kPos + j) = h.normal(j);
      qp.b_in(row) = h.offset;
      ++row;
      sub.halfspaces.push_back(h);
    }
    for (int j = 0; j < 3; ++j) {
      const double c = lin.states[k + 1](kPos + j);
      add(ix + kPos + j, 1.0, c - trust_radius);
      add(ix + kPos + j, -1.0, -(c + trust_radius));
    }
  }
  return sub;
}

Trajectory unpack(const ConvexSubproblem& sub, const RotorState& x0, const Eigen::VectorXd& z) {
  Trajectory t;
  t.states.push_back(x0);
  for (int k = 0; k < sub.horizon; ++k) {
    t.inputs.emplace_back(z.segment<kRotorInputs>(ConvexSubproblem::input_offset(k)));
    t.states.emplace_back(z.segment<kRotorStates>(ConvexSubproblem::state_offset(k)));
  }
  return t;
}

const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::feasible: return "feasible";
    case PlanStatus::infeasible: return "infeasible";
    case PlanStatus::solver_failure: return "solver_failure";
  }
  return "unknown";
}

double trajectory_cost(const Trajectory& traj, const MpcConfig& config) {
  const RotorInput uh = hover_input(config.vehicle);
  double j = 0.0;
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    const RotorState dx = traj.states[k + 1] - config.goal;
    const RotorInput du = traj.inputs[k] - uh;
    j += dx.dot(config.q_diag.cwiseProduct(dx)) + du.dot(config.r_diag.cwiseProduct(du));
  }
  return j;
}

double clearance_margin(const Trajectory& traj, const MpcProblem& problem,
                        const MpcConfig& config) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < problem.predictions.size() && k + 1 < traj.states.size(); ++k) {
    const double d = (traj.states[k + 1].segment<3>(kPos) - problem.predictions[k]).norm();
    m = std::min(m, d - (config.d_safe + config.lipschitz * problem.regions[k]));
  }
  return m;
}

namespace {

Trajectory initial_guess(const MpcProblem& problem, const MpcConfig& config,
                         const DiscreteLinearModel& model) {
  std::vector<RotorInput> u = problem.warm_start.inputs;
  u.resize(static_cast<std::size_t>(config.horizon), hover_input(config.vehicle));
  return rollout(model, problem.x0, u);
}

bool satisfies_boxes(const Trajectory& t, const MpcConfig& config, double tol) {
  for (const auto& u : t.inputs)
    if (((u - config.u_min).array() < -tol).any() || ((config.u_max - u).array() < -tol).any())
      return false;
  for (std::size_t k = 1; k < t.states.size(); ++k)
    for (int j = 0; j < 2; ++j)
      if (std::abs(t.states[k](kAtt + j)) > config.attitude_limit + tol) return false;
  return true;
}

double max_change(const Trajectory& a, const Trajectory& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.inputs.size(); ++k) {
    m = std::max(m, (a.inputs[k] - b.inputs[k]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.states[k + 1] - b.states[k + 1]).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

PlanResult scp_solve(const MpcProblem& problem, const MpcConfig& config) {
  config.validate();
  const DiscreteLinearModel model = discretize_multirotor(config.vehicle, config.dt);
  Trajectory lin = initial_guess(problem, config, model);

  PlanResult out;
  out.trust_radius = config.trust_radius;
  if (config.trust_radius <= 0.0) {
    // Nothing can move: report the warm start as it stands.
    out.plan = lin;
    out.objective = trajectory_cost(lin, config);
    out.non_improving = true;
    const bool ok = satisfies_boxes(lin, config, 1e-6) && clearance_margin(lin, problem, config) >= -1e-6;
    out.status = ok ? PlanStatus::feasible : PlanStatus::infeasible;
    return out;
  }

  double rho = config.trust_radius;
  bool have = false;
  Trajectory best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Halfspace> best_h;

  for (int it = 1; it <= config.scp_max_iterations; ++it) {
    out.iterations = it;
    ConvexSubproblem sub = build_subproblem(problem, config, lin, rho);
    const QpSolution sol = solve_qp(sub.qp);
    if (sol.status == QpStatus::solver_failure) {
      out.status = PlanStatus::solver_failure;
      out.plan = have ? best : lin;
      out.objective = have ? best_cost : trajectory_cost(lin, config);
      out.trust_radius = rho;
      return out;
    }
    if (sol.status == QpStatus::infeasible) {
      if (!have) {
        out.status = PlanStatus::infeasible;
        out.plan = lin;
        out.objective = trajectory_cost(lin, config);
        out.halfspaces = sub.halfspaces;
        out.trust_radius = rho;
        return out;
      }
      break;  // keep the last feasible iterate
    }

    Trajectory cand = unpack(sub, problem.x0, sol.x);
    const double cost = sol.objective + sub.constant;
    if (have && cost > best_cost + 1e-9 * std::max(1.0, std::abs(best_cost))) {
      rho *= 0.5;
      if (rho < config.min_trust_radius) {
        out.non_improving = true;
        break;
      }
      continue;  // retry around the accepted iterate
    }

    // Only the collision and trust rows depend on the linearisation.
    bool nonconvex_inactive = true;
    {
      const int per_step = static_cast<int>(sub.qp.b_in.size()) / config.horizon;
      const int first_lin = 2 * kRotorInputs + 4;
      for (int k = 0; k < config.horizon && nonconvex_inactive; ++k)
        for (int j = first_lin; j < per_step; ++j)
          if (sol.y_in(k * per_step + j) > 1e-9) {
            nonconvex_inactive = false;
            break;
          }
    }
    const double change = have ? max_change(cand, best) : max_change(cand, lin);
    best = std::move(cand);
    best_cost = cost;
    best_h = sub.halfspaces;
    have = true;
    lin = best;
    if (nonconvex_inactive || change < config.scp_tolerance) {
      out.converged = true;
      break;
    }
  }

  out.status = PlanStatus::feasible;
  out.plan = best;
  out.objective = best_cost;
  out.halfspaces = best_h;
  out.trust_radius = rho;
  return out;
}

const char* to_string(UqMethod m) {
  return m == UqMethod::acp ? "acp" : "ekf_gaussian";
}

UqMethod parse_uq_method(const std::string& s) {
  if (s == "acp") return UqMethod::acp;
  if (s == "ekf_gaussian" || s == "ekf") return UqMethod::ekf_gaussian;
  throw std::invalid_argument("unknown uq method '" + s + "' (expected acp or ekf_gaussian)");
}

// ------------------------------------------------------------------ planner

namespace {

PredictorConfig with_horizon(PredictorConfig c, int h) {
  c.horizon = h;
  return c;
}

}  // namespace

Planner::Planner(MpcConfig mpc, PredictorConfig predictor, AcpParams acp, UqMethod method,
                 double sigma_obs)
    : mpc_(std::move(mpc)),
      model_(discretize_multirotor(mpc_.vehicle, mpc_.dt)),
      method_(method),
      predictor_(with_horizon(std::move(predictor), mpc_.horizon), 3, sigma_obs),
      acp_(std::move(acp), mpc_.horizon) {
  mpc_.validate();
}

std::vector<RotorInput> Planner::shifted_inputs() const {
  std::vector<RotorInput> u;
  if (last_inputs_.size() > 1) u.assign(last_inputs_.begin() + 1, last_inputs_.end());
  u.resize(static_cast<std::size_t>(mpc_.horizon), hover_input(mpc_.vehicle));
  return u;
}

StepOutput Planner::step(const RotorState& x, const Vec3& obs) {
  const int H = mpc_.horizon;
  StepOutput out;
  StepDiagnostics& d = out.diagnostics;

  // observe -> predict
  std::vector<Eigen::VectorXd> preds = predictor_.observe(obs);
  d.predictor_ready = !preds.empty();

  // per-tau region update, then read C_{t+1}^tau
  const auto& recs = acp_.step(obs, preds);
  d.regions.resize(H);
  d.delta_levels.resize(H);
  d.error_flags.resize(H);
  d.scores.resize(H);
  const double r_max = acp_.params().r_max;
  const double delta = acp_.params().target_miscoverage;
  for (int tau = 1; tau <= H; ++tau) {
    const auto& r = recs[tau - 1];
    d.scores[tau - 1] = r.score;
    d.delta_levels[tau - 1] = r.delta_level;
    if (method_ == UqMethod::acp) {
      d.error_flags[tau - 1] = r.error_flag;
      d.regions[tau - 1] = r.region.radius;
    } else {
      // Gaussian baseline: judge each score against the radius that travelled
      // with its prediction.
      int flag = -1;
      if (r.score && past_regions_.size() >= static_cast<std::size_t>(tau)) {
        const auto& made = past_regions_[tau - 1];
        if (!made.empty()) flag = *r.score <= made[tau - 1] ? 0 : 1;
      }
      d.error_flags[tau - 1] = flag;
      d.regions[tau - 1] = d.predictor_ready ? predictor_.gaussian_radius(tau, delta) : r_max;
    }
  }
  if (method_ == UqMethod::ekf_gaussian) {
    past_regions_.push_front(d.predictor_ready ? d.regions : std::vector<double>{});
    while (past_regions_.size() > static_cast<std::size_t>(H)) past_regions_.pop_back();
  }

  // Before the predictor has enough history the obstacle is held in place.
  if (d.predictor_ready) {
    for (const auto& p : preds) d.predictions.emplace_back(p.head<3>());
  } else {
    d.predictions.assign(static_cast<std::size_t>(H), obs);
  }

  MpcProblem prob;
  prob.x0 = x;
  prob.predictions = d.predictions;
  prob.regions = d.regions;
  prob.warm_start.inputs = shifted_inputs();
  prob.previous_normals = last_normals_;

  out.plan = scp_solve(prob, mpc_);
  if (out.plan.status == PlanStatus::feasible) {
    last_inputs_ = out.plan.plan.inputs;
    last_normals_.clear();
    for (const auto& h : out.plan.halfspaces) last_normals_.push_back(h.normal);
    out.input = last_inputs_.front();
  } else {
    d.fallback_used = true;
    last_inputs_ = shifted_inputs();
    out.input = last_inputs_.front();
  }
  return out;
}

}  // namespace acpmpc
