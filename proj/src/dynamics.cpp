#include "acpmpc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace acpmpc {

// ---------------------------------------------------------------- pendulum

PendulumState pendulum_derivative(const PendulumState& s, const PendulumParams& p) {
  const double d = s.theta1 - s.theta2;
  const double den = 2.0 * p.m1 + p.m2 - p.m2 * std::cos(2.0 * d);
  const double w1s = s.omega1 * s.omega1;
  const double w2s = s.omega2 * s.omega2;
  PendulumState out;
  out.theta1 = s.omega1;
  out.theta2 = s.omega2;
  out.omega1 = (-p.g * (2.0 * p.m1 + p.m2) * std::sin(s.theta1) -
                p.m2 * p.g * std::sin(s.theta1 - 2.0 * s.theta2) -
                2.0 * std::sin(d) * p.m2 * (w2s * p.l2 + w1s * p.l1 * std::cos(d))) /
               (p.l1 * den);
  out.omega2 = (2.0 * std::sin(d) *
                (w1s * p.l1 * (p.m1 + p.m2) + p.g * (p.m1 + p.m2) * std::cos(s.theta1) +
                 w2s * p.l2 * p.m2 * std::cos(d))) /
               (p.l2 * den);
  return out;
}

namespace {

PendulumState axpy(const PendulumState& x, double a, const PendulumState& k) {
  return {x.theta1 + a * k.theta1, x.theta2 + a * k.theta2, x.omega1 + a * k.omega1,
          x.omega2 + a * k.omega2};
}

}  // namespace

PendulumState pendulum_step(const PendulumState& s, const PendulumParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pendulum_step: dt must be positive");
  const PendulumState k1 = pendulum_derivative(s, p);
  const PendulumState k2 = pendulum_derivative(axpy(s, 0.5 * dt, k1), p);
  const PendulumState k3 = pendulum_derivative(axpy(s, 0.5 * dt, k2), p);
  const PendulumState k4 = pendulum_derivative(axpy(s, dt, k3), p);
  PendulumState out;
  out.theta1 = s.theta1 + dt / 6.0 * (k1.theta1 + 2 * k2.theta1 + 2 * k3.theta1 + k4.theta1);
  out.theta2 = s.theta2 + dt / 6.0 * (k1.theta2 + 2 * k2.theta2 + 2 * k3.theta2 + k4.theta2);
  out.omega1 = s.omega1 + dt / 6.0 * (k1.omega1 + 2 * k2.omega1 + 2 * k3.omega1 + k4.omega1);
  out.omega2 = s.omega2 + dt / 6.0 * (k1.omega2 + 2 * k2.omega2 + 2 * k3.omega2 + k4.omega2);
  return out;
}

double pendulum_energy(const PendulumState& s, const PendulumParams& p) {
  const double kinetic =
      0.5 * p.m1 * p.l1 * p.l1 * s.omega1 * s.omega1 +
      0.5 * p.m2 *
          (p.l1 * p.l1 * s.omega1 * s.omega1 + p.l2 * p.l2 * s.omega2 * s.omega2 +
           2.0 * p.l1 * p.l2 * s.omega1 * s.omega2 * std::cos(s.theta1 - s.theta2));
  const double potential =
      -(p.m1 + p.m2) * p.g * p.l1 * std::cos(s.theta1) - p.m2 * p.g * p.l2 * std::cos(s.theta2);
  return kinetic + potential;
}

Eigen::Vector4d pendulum_observables(const PendulumState& s, const PendulumParams& p) {
  const double x1 = p.l1 * std::sin(s.theta1);
  const double y1 = -p.l1 * std::cos(s.theta1);
  return {x1, y1, x1 + p.l2 * std::sin(s.theta2), y1 - p.l2 * std::cos(s.theta2)};
}

// ----------------------------------------------------------------- frisbee

double frisbee_angle_of_attack(const FrisbeeState& s) {
  const double v = s.velocity.norm();
  if (v < 1e-12) return 0.0;
  const double c = std::clamp(s.velocity.dot(s.disc_normal) / v, -1.0, 1.0);
  return -std::asin(c);
}

Vec3 frisbee_acceleration(const FrisbeeState& s, const FrisbeeParams& p) {
  Vec3 acc(0.0, 0.0, -p.g);
  const double v = s.velocity.norm();
  if (v < 1e-12) return acc;
  const Vec3 vhat = s.velocity / v;
  const double alpha = frisbee_angle_of_attack(s);
  const double cl = p.cl0 + p.cl_alpha * alpha;
  const double cd = p.cd0 + p.cd_alpha * (alpha - p.alpha0) * (alpha - p.alpha0);
  const double qa = 0.5 * p.air_density * v * v * p.area;
  acc += (-qa * cd / p.mass) * vhat;
  Vec3 lift_dir = s.disc_normal - s.disc_normal.dot(vhat) * vhat;
  const double n = lift_dir.norm();
  if (n > 1e-12) acc += (qa * cl / p.mass / n) * lift_dir;
  return acc;
}

FrisbeeState frisbee_step(const FrisbeeState& s, const FrisbeeParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("frisbee_step: dt must be positive");
  auto at = [&](const Vec3& pos, const Vec3& vel) {
    FrisbeeState t = s;
    t.position = pos;
    t.velocity = vel;
    return frisbee_acceleration(t, p);
  };
  const Vec3 p1 = s.position, v1 = s.velocity, a1 = at(p1, v1);
  const Vec3 p2 = p1 + 0.5 * dt * v1, v2 = v1 + 0.5 * dt * a1, a2 = at(p2, v2);
  const Vec3 p3 = p1 + 0.5 * dt * v2, v3 = v1 + 0.5 * dt * a2, a3 = at(p3, v3);
  const Vec3 p4 = p1 + dt * v3, v4 = v1 + dt * a3, a4 = at(p4, v4);
  FrisbeeState out = s;
  out.position = p1 + dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
  out.velocity = v1 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  return out;
}

Vec3 disc_normal_for(const Vec3& velocity, double alpha) {
  const double v = velocity.norm();
  const Vec3 vhat = v < 1e-12 ? Vec3::UnitX() : Vec3(velocity / v);
  Vec3 side = vhat.cross(Vec3::UnitZ());
  if (side.norm() < 1e-9) side = Vec3::UnitY();  // vertical flight
  side.normalize();
  const Vec3 up = side.cross(vhat);
  return (std::cos(alpha) * up - std::sin(alpha) * vhat).normalized();
}

// --------------------------------------------------------------- multirotor

void multirotor_continuous(const MultirotorParams& p,
                           Eigen::Matrix<double, kRotorStates, kRotorStates>& Ac,
                           Eigen::Matrix<double, kRotorStates, kRotorInputs>& Bc,
                           RotorState& cc) {
  Ac.setZero();
  Bc.setZero();
  cc.setZero();
  for (int i = 0; i < 3; ++i) {
    Ac(i, 3 + i) = 1.0;  // position <- velocity
    Ac(6 + i, 9 + i) = 1.0;  // attitude <- rates
  }
  Ac(3, 7) = -p.g;  // xddot = -g theta
  Ac(4, 6) = p.g;   // yddot = g phi
  Bc(5, 0) = 1.0;   // zddot = u1 - g
  cc(5) = -p.g;
  Bc(9, 1) = 1.0 / p.ixx;
  Bc(10, 2) = 1.0 / p.iyy;
  Bc(11, 3) = 1.0 / p.izz;
}

DiscreteLinearModel discretize_multirotor(const MultirotorParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize_multirotor: dt must be positive");
  Eigen::Matrix<double, kRotorStates, kRotorStates> Ac;
  Eigen::Matrix<double, kRotorStates, kRotorInputs> Bc;
  RotorState cc;
  multirotor_continuous(p, Ac, Bc, cc);

  constexpr int n = kRotorStates + kRotorInputs + 1;
  Eigen::Matrix<double, n, n> M = Eigen::Matrix<double, n, n>::Zero();
  M.block<kRotorStates, kRotorStates>(0, 0) = Ac * dt;
  M.block<kRotorStates, kRotorInputs>(0, kRotorStates) = Bc * dt;
  M.block<kRotorStates, 1>(0, kRotorStates + kRotorInputs) = cc * dt;

  // The input-to-position chain has length 5, so the series terminates.
  Eigen::Matrix<double, n, n> E = Eigen::Matrix<double, n, n>::Identity();
  Eigen::Matrix<double, n, n> term = Eigen::Matrix<double, n, n>::Identity();
  for (int k = 1; k <= 8; ++k) {
    term = term * M / static_cast<double>(k);
    E += term;
  }
  DiscreteLinearModel out;
  out.A = E.block<kRotorStates, kRotorStates>(0, 0);
  out.B = E.block<kRotorStates, kRotorInputs>(0, kRotorStates);
  out.c = E.block<kRotorStates, 1>(0, kRotorStates + kRotorInputs);
  out.dt = dt;
  return out;
}

RotorState multirotor_step(const RotorState& x, const RotorInput& u, const MultirotorParams& p,
                           double dt) {
  return discretize_multirotor(p, dt).step(x, u);
}

RotorInput hover_input(const MultirotorParams& p) { return RotorInput(p.g, 0.0, 0.0, 0.0); }

// ------------------------------------------------------------- observation

Observer::Observer(NoiseSpec spec) : spec_(spec), rng_(spec.seed) {
  if (spec_.sigma_obs < 0.0) throw std::invalid_argument("sigma_obs must be >= 0");
}

Eigen::VectorXd Observer::observe(const Eigen::Ref<const Eigen::VectorXd>& truth) {
  Eigen::VectorXd y = truth;
  if (spec_.sigma_obs == 0.0) return y;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += spec_.sigma_obs * normal_(rng_);
  return y;
}

}  // namespace acpmpc
