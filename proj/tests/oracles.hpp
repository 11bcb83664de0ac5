#pragma once

// Reference computations shared by the unit tests and the acceptance run.
// None of these call into the library code they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "acpmpc/dynamics.hpp"

namespace oracle {

// q-th smallest score, q the least integer >= (n+1)(1-level); r_max when
// q > n or the window is empty; result capped at r_max. Linear scan instead
// of ceil, full sort instead of selection.
inline double quantile(std::vector<double> scores, double level, double r_max) {
  level = std::clamp(level, 0.0, 1.0);
  const std::size_t n = scores.size();
  const double target = static_cast<double>(n + 1) * (1.0 - level);
  std::size_t q = 1;
  while (static_cast<double>(q) < target - 1e-12) ++q;
  if (n == 0 || q > n) return r_max;
  std::sort(scores.begin(), scores.end());
  return std::min(scores[q - 1], r_max);
}

inline std::vector<double> sinusoid(int n, double omega, double amp = 1.0, double phase = 0.3) {
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) y[k] = amp * std::sin(omega * k + phase);
  return y;
}

inline std::vector<double> geometric(int n, double ratio, double y0 = 1.0) {
  std::vector<double> y(static_cast<std::size_t>(n));
  double v = y0;
  for (int k = 0; k < n; ++k, v *= ratio) y[k] = v;
  return y;
}

// Finite-horizon LQ with stage cost x_{k+1}'Q x_{k+1} + u_k'R u_k, solved by
// the backward Riccati recursion; returns u_0..u_{H-1} from x0.
template <int N, int M>
std::vector<Eigen::Matrix<double, M, 1>> riccati_inputs(
    const Eigen::Matrix<double, N, N>& A, const Eigen::Matrix<double, N, M>& B,
    const Eigen::Matrix<double, N, N>& Q, const Eigen::Matrix<double, M, M>& R,
    const Eigen::Matrix<double, N, 1>& x0, int H) {
  using MatN = Eigen::Matrix<double, N, N>;
  std::vector<Eigen::Matrix<double, M, N>> K(static_cast<std::size_t>(H));
  MatN P = MatN::Zero();
  for (int k = H - 1; k >= 0; --k) {
    const MatN S = Q + P;
    const Eigen::Matrix<double, M, M> G = R + B.transpose() * S * B;
    K[k] = G.ldlt().solve(B.transpose() * S * A);
    P = A.transpose() * S * A - A.transpose() * S * B * K[k];
    P = 0.5 * (P + P.transpose());
  }
  std::vector<Eigen::Matrix<double, M, 1>> u;
  Eigen::Matrix<double, N, 1> x = x0;
  for (int k = 0; k < H; ++k) {
    u.push_back(-K[k] * x);
    x = A * x + B * u.back();
  }
  return u;
}

// Points on and beyond the plane n.p = offset, spread around the plane's
// closest point to yhat.
inline std::vector<acpmpc::Vec3> sample_halfspace(const acpmpc::Vec3& normal, double offset,
                                                  const acpmpc::Vec3& yhat, int count,
                                                  std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::exponential_distribution<double> ed(1.0);
  const acpmpc::Vec3 foot = yhat + (offset - normal.dot(yhat)) * normal;
  std::vector<acpmpc::Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    acpmpc::Vec3 t(nd(rng), nd(rng), nd(rng));
    t -= t.dot(normal) * normal;
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
    const double beyond = (i % 4 == 0) ? 0.0 : ed(rng) * 0.1;
    out.push_back(foot + scale * t + beyond * normal);
  }
  return out;
}

}  // namespace oracle
