#pragma once

// Dense convex QP
//
//   minimise   1/2 x'Px + q'x
//   subject to A_eq x  = b_eq
//              A_in x >= b_in
//
// Equalities are eliminated through a null-space basis; the reduced strictly
// convex problem is solved with the Goldfarb-Idnani dual active-set method,
// which either terminates at the optimum or exhibits a Farkas certificate of
// primal infeasibility. Deterministic for a fixed input.

#include <string>

#include <Eigen/Dense>

namespace acpmpc {

struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;

  Eigen::Index num_variables() const { return q.size(); }
  void validate() const;
};

enum class QpStatus { optimal, infeasible, solver_failure };

const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::solver_failure;
  Eigen::VectorXd x;
  Eigen::VectorXd y_in;  // multipliers, >= 0
  Eigen::VectorXd y_eq;
  double objective = 0.0;
  int iterations = 0;
  // When infeasible: y >= 0 over the inequality rows (and z over equalities)
  // with A_in'y + A_eq'z = 0 and b_in'y + b_eq'z > 0.
  Eigen::VectorXd certificate_in;
  Eigen::VectorXd certificate_eq;
  std::string message;
};

struct QpSettings {
  int max_iterations = 2000;
  double feasibility_tol = 1e-9;
};

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

struct KktReport {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_in = 0.0;     // max violation of A_in x >= b_in
  double dual_in = 0.0;       // max negative multiplier
  double complementarity = 0.0;
  double max() const;
};

KktReport kkt_residuals(const QpProblem& problem, const QpSolution& solution);

}  // namespace acpmpc
