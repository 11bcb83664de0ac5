#include "acpmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace acpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ReducedResult {
  QpStatus status = QpStatus::solver_failure;
  Eigen::VectorXd w;
  Eigen::VectorXd u;  // multiplier per reduced inequality row
  Eigen::VectorXd farkas;
  int iterations = 0;
};

// min 1/2 w'Gw + g'w  s.t.  C w >= d, G positive definite (given by its
// Cholesky factor).
ReducedResult dual_active_set(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& g,
                              const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                              const QpSettings& settings) {
  const Eigen::Index n = g.size();
  const Eigen::Index m = C.rows();
  ReducedResult res;
  res.u = Eigen::VectorXd::Zero(m);

  const Eigen::MatrixXd Lmat = llt.matrixL();
  const Eigen::MatrixXd J0 =
      Lmat.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd w = -llt.solve(g);

  Eigen::VectorXd row_norm(m);
  for (Eigen::Index i = 0; i < m; ++i) row_norm(i) = std::max(C.row(i).norm(), 1e-300);

  std::vector<Eigen::Index> active;
  std::vector<double> mult;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);

  for (;;) {
    Eigen::Index p = -1;
    double worst = -settings.feasibility_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[i]) continue;
      const double s = (C.row(i).dot(w) - d(i)) / std::max(1.0, row_norm(i));
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) break;

    const Eigen::VectorXd np = C.row(p).transpose();
    double u_plus = 0.0;
    for (;;) {
      if (++res.iterations > settings.max_iterations) {
        res.status = QpStatus::solver_failure;
        res.w = w;
        return res;
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd Jq = J0;
      Eigen::MatrixXd R;
      if (q > 0) {
        Eigen::MatrixXd N(n, q);
        for (Eigen::Index j = 0; j < q; ++j) N.col(j) = C.row(active[j]).transpose();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(J0.transpose() * N);
        Jq = J0 * qr.householderQ();
        R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
      }
      const Eigen::VectorXd dv = Jq.transpose() * np;
      const Eigen::VectorXd z = Jq.rightCols(n - q) * dv.tail(n - q);
      Eigen::VectorXd r;
      if (q > 0) r = R.triangularView<Eigen::Upper>().solve(dv.head(q));

      double t1 = kInf;
      Eigen::Index drop = -1;
      const double r_eps = 1e-12 * std::max(1.0, np.norm());
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r(j) > r_eps) {
          const double ratio = mult[j] / r(j);
          if (ratio < t1) {
            t1 = ratio;
            drop = j;
          }
        }
      }
      const double zn = z.dot(np);
      const double sp = np.dot(w) - d(p);
      const double t2 = (z.norm() > 1e-12 * std::max(1.0, np.norm()) && zn > 0.0) ? -sp / zn : kInf;
      const double t = std::min(t1, t2);

      if (t == kInf) {
        // n_p lies in the span of the active normals with nonpositive weights.
        res.status = QpStatus::infeasible;
        res.farkas = Eigen::VectorXd::Zero(m);
        res.farkas(p) = 1.0;
        for (Eigen::Index j = 0; j < q; ++j) res.farkas(active[j]) = std::max(-r(j), 0.0);
        res.w = w;
        return res;
      }

      if (t2 == kInf) {
        for (Eigen::Index j = 0; j < q; ++j) mult[j] -= t * r(j);
        u_plus += t;
        is_active[active[drop]] = 0;
        active.erase(active.begin() + drop);
        mult.erase(mult.begin() + drop);
        continue;
      }

      w += t * z;
      for (Eigen::Index j = 0; j < q; ++j) mult[j] -= t * r(j);
      u_plus += t;
      if (t2 <= t1) {
        active.push_back(p);
        mult.push_back(u_plus);
        is_active[p] = 1;
        break;
      }
      is_active[active[drop]] = 0;
      active.erase(active.begin() + drop);
      mult.erase(mult.begin() + drop);
    }
  }

  res.status = QpStatus::optimal;
  res.w = w;
  for (std::size_t j = 0; j < active.size(); ++j) res.u(active[j]) = std::max(mult[j], 0.0);
  return res;
}

}  // namespace

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::solver_failure: return "solver_failure";
  }
  return "unknown";
}

void QpProblem::validate() const {
  const Eigen::Index n = q.size();
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("qp: P must be n x n");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw std::invalid_argument("qp: equality dimensions inconsistent");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw std::invalid_argument("qp: inequality dimensions inconsistent");
}

QpSolution solve_qp(const QpProblem& prob, const QpSettings& settings) {
  prob.validate();
  const Eigen::Index n = prob.num_variables();
  const Eigen::Index me = prob.A_eq.rows();
  const Eigen::Index mi = prob.A_in.rows();
  QpSolution sol;

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(n, n);
  if (me > 0) {
    x0 = prob.A_eq.completeOrthogonalDecomposition().solve(prob.b_eq);
    const Eigen::VectorXd resid = prob.A_eq * x0 - prob.b_eq;
    if (resid.norm() > 1e-8 * (1.0 + prob.b_eq.norm())) {
      sol.status = QpStatus::infeasible;
      sol.x = x0;
      sol.certificate_in = Eigen::VectorXd::Zero(mi);
      // z = -(residual) restricted to the left null space of A_eq.
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(prob.A_eq);
      const Eigen::MatrixXd Qf = qr.householderQ();
      const Eigen::MatrixXd Nleft = Qf.rightCols(me - qr.rank());
      sol.certificate_eq = Nleft * (Nleft.transpose() * prob.b_eq);
      sol.message = "inconsistent equality constraints";
      return sol;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(prob.A_eq.transpose());
    const Eigen::Index r = qr.rank();
    const Eigen::MatrixXd Qf = qr.householderQ();
    Z = Qf.rightCols(n - r);
  }

  const Eigen::Index nr = Z.cols();
  const Eigen::MatrixXd C = mi > 0 ? Eigen::MatrixXd(prob.A_in * Z) : Eigen::MatrixXd(0, nr);
  const Eigen::VectorXd d = mi > 0 ? Eigen::VectorXd(prob.b_in - prob.A_in * x0) : Eigen::VectorXd(0);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(nr);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mi);
  if (nr == 0) {
    Eigen::Index worst = -1;
    double wv = -settings.feasibility_tol;
    for (Eigen::Index i = 0; i < mi; ++i) {
      const double s = -d(i) / std::max(1.0, prob.A_in.row(i).norm());
      if (s < wv) {
        wv = s;
        worst = i;
      }
    }
    if (worst >= 0) {
      sol.status = QpStatus::infeasible;
      sol.x = x0;
      sol.certificate_in = Eigen::VectorXd::Zero(mi);
      sol.certificate_in(worst) = 1.0;
      if (me > 0)
        sol.certificate_eq = -(prob.A_eq.transpose().completeOrthogonalDecomposition().solve(
            Eigen::VectorXd(prob.A_in.transpose() * sol.certificate_in)));
      sol.message = "fixed point violates an inequality";
      return sol;
    }
  } else {
    Eigen::MatrixXd G = Z.transpose() * prob.P * Z;
    G = 0.5 * (G + G.transpose());
    const Eigen::VectorXd g = Z.transpose() * (prob.P * x0 + prob.q);
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    double reg = 1e-10 * std::max(1.0, G.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; llt.info() != Eigen::Success && attempt < 12; ++attempt) {
      llt.compute(G + reg * Eigen::MatrixXd::Identity(nr, nr));
      reg *= 10.0;
    }
    if (llt.info() != Eigen::Success) {
      sol.status = QpStatus::solver_failure;
      sol.message = "reduced Hessian is not positive definite";
      return sol;
    }
    ReducedResult rr = dual_active_set(llt, g, C, d, settings);
    sol.iterations = rr.iterations;
    if (rr.status == QpStatus::infeasible) {
      sol.status = QpStatus::infeasible;
      sol.x = x0 + Z * rr.w;
      sol.certificate_in = rr.farkas;
      // Equality part: A_in'y must vanish on null(A_eq); its remainder lies
      // in range(A_eq') and is cancelled by z.
      if (me > 0) {
        const Eigen::VectorXd v = prob.A_in.transpose() * rr.farkas;
        sol.certificate_eq = -(prob.A_eq.transpose().completeOrthogonalDecomposition().solve(v));
      }
      sol.message = "primal infeasible";
      return sol;
    }
    if (rr.status == QpStatus::solver_failure) {
      sol.status = QpStatus::solver_failure;
      sol.x = x0 + Z * rr.w;
      sol.message = "iteration limit reached";
      return sol;
    }
    w = rr.w;
    u = rr.u;
  }

  sol.status = QpStatus::optimal;
  sol.x = x0 + Z * w;
  sol.y_in = u;
  sol.objective = 0.5 * sol.x.dot(prob.P * sol.x) + prob.q.dot(sol.x);
  if (me > 0) {
    Eigen::VectorXd grad = prob.P * sol.x + prob.q;
    if (mi > 0) grad -= prob.A_in.transpose() * u;
    sol.y_eq = prob.A_eq.transpose().completeOrthogonalDecomposition().solve(grad);
  } else {
    sol.y_eq = Eigen::VectorXd(0);
  }
  return sol;
}

double KktReport::max() const {
  return std::max({stationarity, primal_eq, primal_in, dual_in, complementarity});
}

KktReport kkt_residuals(const QpProblem& prob, const QpSolution& sol) {
  KktReport k;
  const Eigen::Index me = prob.A_eq.rows();
  const Eigen::Index mi = prob.A_in.rows();
  Eigen::VectorXd grad = prob.P * sol.x + prob.q;
  if (mi > 0) grad -= prob.A_in.transpose() * sol.y_in;
  if (me > 0) grad -= prob.A_eq.transpose() * sol.y_eq;
  k.stationarity = grad.cwiseAbs().maxCoeff();
  if (me > 0) k.primal_eq = (prob.A_eq * sol.x - prob.b_eq).cwiseAbs().maxCoeff();
  if (mi > 0) {
    const Eigen::VectorXd s = prob.A_in * sol.x - prob.b_in;
    k.primal_in = std::max(0.0, -s.minCoeff());
    k.dual_in = std::max(0.0, -sol.y_in.minCoeff());
    k.complementarity = s.cwiseProduct(sol.y_in).cwiseAbs().maxCoeff();
  }
  return k;
}

}  // namespace acpmpc
