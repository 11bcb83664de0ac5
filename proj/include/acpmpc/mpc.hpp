#pragma once

// Receding-horizon planner for the small-angle multirotor.
//
// Each step runs the ACP loop over the obstacle forecasts and then a
// sequential convex programme: collision constraints are linearised into
// halfspaces around the current trajectory guess, tightened by L * C^tau.
// Because each halfspace lies outside the keep-out ball, every feasible
// iterate also satisfies the original norm constraint.

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acpmpc/acp.hpp"
#include "acpmpc/dynamics.hpp"
#include "acpmpc/predictor.hpp"
#include "acpmpc/qp.hpp"

namespace acpmpc {

struct MpcConfig {
  int horizon = 10;
  double dt = 0.05;
  RotorState q_diag = RotorState::Zero();  // state tracking weights
  RotorInput r_diag = RotorInput::Zero();  // hover-deviation weights
  RotorState goal = RotorState::Zero();
  double d_safe = 0.5;
  double lipschitz = 1.0;
  RotorInput u_min = RotorInput::Zero();
  RotorInput u_max = RotorInput::Zero();
  double attitude_limit = 0.45;  // |phi|, |theta|
  int scp_max_iterations = 10;
  double trust_radius = 2.0;
  double min_trust_radius = 1e-3;
  double scp_tolerance = 1e-4;
  MultirotorParams vehicle;

  static MpcConfig defaults();
  void validate() const;
};

struct Halfspace {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;  // normal . p >= offset
  bool degenerate = false;
};

// Conservative linearisation of ||p - yhat|| >= d_safe + L * C around xbar.
Halfspace linearize_collision(const Vec3& xbar, const Vec3& yhat, double region,
                              double lipschitz, double d_safe,
                              const std::optional<Vec3>& fallback_normal = std::nullopt);

struct Trajectory {
  std::vector<RotorState> states;  // x_0 .. x_H
  std::vector<RotorInput> inputs;  // u_0 .. u_{H-1}
};

// Rolls inputs forward from x0.
Trajectory rollout(const DiscreteLinearModel& model, const RotorState& x0,
                   const std::vector<RotorInput>& inputs);

struct MpcProblem {
  RotorState x0 = RotorState::Zero();
  std::vector<Vec3> predictions;  // yhat^1..H; empty = no obstacle
  std::vector<double> regions;    // C^1..H
  Trajectory warm_start;          // empty = hover hold
  std::vector<Vec3> previous_normals;
};

struct ConvexSubproblem {
  QpProblem qp;
  double constant = 0.0;  // objective constant dropped from the QP
  int horizon = 0;
  std::vector<Halfspace> halfspaces;
  int degenerate_linearizations = 0;

  static constexpr int kStride = kRotorInputs + kRotorStates;
  static int input_offset(int k) { return k * kStride; }
  static int state_offset(int k) { return k * kStride + kRotorInputs; }  // x_{k+1}
};

ConvexSubproblem build_subproblem(const MpcProblem& problem, const MpcConfig& config,
                                  const Trajectory& linearization, double trust_radius);

Trajectory unpack(const ConvexSubproblem& sub, const RotorState& x0, const Eigen::VectorXd& z);

enum class PlanStatus { feasible, infeasible, solver_failure };
const char* to_string(PlanStatus s);

struct PlanResult {
  PlanStatus status = PlanStatus::infeasible;
  Trajectory plan;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool non_improving = false;
  double trust_radius = 0.0;
  std::vector<Halfspace> halfspaces;
};

// Tracking cost sum_k J(x_{k+1}, u_k).
double trajectory_cost(const Trajectory& traj, const MpcConfig& config);

// Smallest ||p_tau - yhat^tau|| - (d_safe + L * C^tau) over the horizon
// (+inf when there is no obstacle).
double clearance_margin(const Trajectory& traj, const MpcProblem& problem,
                        const MpcConfig& config);

PlanResult scp_solve(const MpcProblem& problem, const MpcConfig& config);

enum class UqMethod { acp, ekf_gaussian };
const char* to_string(UqMethod m);
UqMethod parse_uq_method(const std::string& s);

struct StepDiagnostics {
  std::vector<Vec3> predictions;             // yhat_t^1..H used by the planner
  std::vector<double> regions;               // C^1..H used by the planner
  std::vector<double> delta_levels;          // delta_{t+1}^tau
  std::vector<int> error_flags;              // e_t^tau, -1 if unavailable
  std::vector<std::optional<double>> scores; // R_t^tau
  bool predictor_ready = false;
  bool fallback_used = false;
};

struct StepOutput {
  RotorInput input;
  PlanResult plan;
  StepDiagnostics diagnostics;
};

// Algorithm loop: observe -> predict -> ACP regions -> SCP -> apply u_t.
class Planner {
 public:
  Planner(MpcConfig mpc, PredictorConfig predictor, AcpParams acp, UqMethod method,
          double sigma_obs);

  StepOutput step(const RotorState& x, const Vec3& obstacle_observation);

  const MultiStepAcp& acp() const { return acp_; }
  const SlidingPredictor& predictor() const { return predictor_; }
  const MpcConfig& config() const { return mpc_; }

 private:
  std::vector<RotorInput> shifted_inputs() const;

  MpcConfig mpc_;
  DiscreteLinearModel model_;
  UqMethod method_;
  SlidingPredictor predictor_;
  MultiStepAcp acp_;
  std::vector<RotorInput> last_inputs_;  // remaining plan, front = next input
  std::vector<Vec3> last_normals_;
  std::deque<std::vector<double>> past_regions_;  // baseline regions, front = newest
};

}  // namespace acpmpc
