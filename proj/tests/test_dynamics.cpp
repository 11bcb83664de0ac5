#include "doctest.h"

#include <cmath>

#include "acpmpc/dynamics.hpp"

using namespace acpmpc;

TEST_CASE("pendulum keeps its energy under fine steps") {
  PendulumParams p;
  PendulumState s{2.0, 2.5, 0.0, 0.0};
  const double e0 = pendulum_energy(s, p);
  for (int k = 0; k < 5000; ++k) s = pendulum_step(s, p, 0.001);
  CHECK(std::abs(pendulum_energy(s, p) - e0) < 1e-6 * std::abs(e0) + 1e-6);
}

TEST_CASE("pendulum at rest hanging down stays put") {
  PendulumParams p;
  const PendulumState s{0.0, 0.0, 0.0, 0.0};
  const PendulumState d = pendulum_derivative(s, p);
  CHECK(std::abs(d.omega1) < 1e-15);
  CHECK(std::abs(d.omega2) < 1e-15);
  const Eigen::Vector4d o = pendulum_observables(s, p);
  CHECK(o(0) == doctest::Approx(0.0));
  CHECK(o(1) == doctest::Approx(-1.0));
  CHECK(o(3) == doctest::Approx(-2.0));
}

TEST_CASE("frisbee with aerodynamics switched off is a parabola") {
  FrisbeeParams p;
  p.cl0 = p.cl_alpha = p.cd0 = p.cd_alpha = 0.0;
  FrisbeeState s;
  s.position = Vec3(1.0, -2.0, 3.0);
  s.velocity = Vec3(10.0, 2.0, 5.0);
  const FrisbeeState s0 = s;
  const double dt = 0.01;
  for (int k = 0; k < 150; ++k) s = frisbee_step(s, p, dt);
  const double t = 150 * dt;
  const Vec3 expect = s0.position + s0.velocity * t + Vec3(0, 0, -0.5 * p.g * t * t);
  CHECK((s.position - expect).norm() < 1e-6);
  CHECK((s.velocity - (s0.velocity + Vec3(0, 0, -p.g * t))).norm() < 1e-6);
}

TEST_CASE("frisbee drag slows and lift holds it up") {
  FrisbeeParams p;
  FrisbeeState s;
  s.velocity = Vec3(15.0, 0.0, 0.0);
  s.disc_normal = disc_normal_for(s.velocity, 0.1);
  CHECK(frisbee_angle_of_attack(s) == doctest::Approx(0.1).epsilon(1e-9));
  const Vec3 a = frisbee_acceleration(s, p);
  CHECK(a.x() < 0.0);
  CHECK(a.z() > -p.g);
  CHECK_THROWS_AS(frisbee_step(s, p, 0.0), std::invalid_argument);
}

TEST_CASE("disc normal gives the requested angle of attack") {
  for (const Vec3 v : {Vec3(10, 0, 0), Vec3(-5, 8, 3), Vec3(3, -4, -6)}) {
    for (double alpha : {-0.1, 0.0, 0.05, 0.2}) {
      FrisbeeState s;
      s.velocity = v;
      s.disc_normal = disc_normal_for(v, alpha);
      CHECK(s.disc_normal.norm() == doctest::Approx(1.0));
      CHECK(frisbee_angle_of_attack(s) == doctest::Approx(alpha).epsilon(1e-9));
      CHECK(s.disc_normal.z() > 0.0);
    }
  }
}

TEST_CASE("multirotor sign conventions") {
  Eigen::Matrix<double, kRotorStates, kRotorStates> Ac;
  Eigen::Matrix<double, kRotorStates, kRotorInputs> Bc;
  RotorState cc;
  MultirotorParams p;
  multirotor_continuous(p, Ac, Bc, cc);
  CHECK(Ac(3, 7) == -p.g);  // xdd = -g theta
  CHECK(Ac(4, 6) == p.g);   // ydd = g phi
  CHECK(Bc(5, 0) == 1.0);
  CHECK(cc(5) == -p.g);
  CHECK(Bc(9, 1) == doctest::Approx(1.0 / p.ixx));
  CHECK(Bc(10, 2) == doctest::Approx(1.0 / p.iyy));
  CHECK(Bc(11, 3) == doctest::Approx(1.0 / p.izz));
}

TEST_CASE("hover is an equilibrium") {
  MultirotorParams p;
  RotorState x = RotorState::Zero();
  x.head<3>() = Vec3(1.0, 2.0, 3.0);
  const RotorState y = multirotor_step(x, hover_input(p), p, 0.05);
  CHECK((y - x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero-order hold matches fine integration of the continuous model") {
  MultirotorParams p;
  Eigen::Matrix<double, kRotorStates, kRotorStates> Ac;
  Eigen::Matrix<double, kRotorStates, kRotorInputs> Bc;
  RotorState cc;
  multirotor_continuous(p, Ac, Bc, cc);
  RotorState x0;
  x0 << 0.1, -0.2, 3.0, 0.5, 0.1, -0.3, 0.05, -0.02, 0.1, 0.3, -0.1, 0.2;
  const RotorInput u(11.0, 0.05, -0.03, 0.02);

  // RK4 on the affine ODE with small steps.
  RotorState x = x0;
  const int n = 2000;
  const double h = 0.05 / n;
  auto f = [&](const RotorState& s) -> RotorState { return Ac * s + Bc * u + cc; };
  for (int i = 0; i < n; ++i) {
    const RotorState k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2),
                     k4 = f(x + h * k3);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  CHECK((multirotor_step(x0, u, p, 0.05) - x).cwiseAbs().maxCoeff() < 1e-10);

  const DiscreteLinearModel m = discretize_multirotor(p, 0.05);
  CHECK((m.step(x0, u) - x).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("observer noise is seeded") {
  const Eigen::Vector3d truth(1.0, 2.0, 3.0);
  Observer a({0.1, 42}), b({0.1, 42}), c({0.1, 43});
  const Eigen::VectorXd ya = a.observe(truth), yb = b.observe(truth), yc = c.observe(truth);
  CHECK(ya == yb);
  CHECK(ya != yc);
  Observer exact({0.0, 1});
  CHECK(exact.observe(truth) == Eigen::VectorXd(truth));
  CHECK_THROWS_AS(Observer({-1.0, 0}), std::invalid_argument);
}
