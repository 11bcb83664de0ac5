#pragma once

// Simulated worlds: planar double pendulum, fixed-attitude frisbee and the
// small-angle multirotor, plus seeded noisy observation.

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace acpmpc {

using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------- pendulum

struct PendulumParams {
  double m1 = 1.0, m2 = 1.0;  // kg
  double l1 = 1.0, l2 = 1.0;  // m
  double g = 9.81;
};

struct PendulumState {
  double theta1 = 0.0, theta2 = 0.0;  // rad
  double omega1 = 0.0, omega2 = 0.0;  // rad/s
};

PendulumState pendulum_derivative(const PendulumState& s, const PendulumParams& p);
PendulumState pendulum_step(const PendulumState& s, const PendulumParams& p, double dt);
double pendulum_energy(const PendulumState& s, const PendulumParams& p);
// (x1, y1, x2, y2)
Eigen::Vector4d pendulum_observables(const PendulumState& s, const PendulumParams& p);

// ----------------------------------------------------------------- frisbee

struct FrisbeeParams {
  double cl0 = 0.188;
  double cl_alpha = 2.37;   // 1/rad
  double cd0 = 0.15;
  double cd_alpha = 1.24;   // 1/rad^2
  double alpha0 = -0.07;    // rad
  double area = 0.0568;     // m^2
  double mass = 0.175;      // kg
  double air_density = 1.23;
  double g = 9.81;
};

struct FrisbeeState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double spin_rate = 0.0;         // rad/s, carried along; attitude is held fixed
  Vec3 disc_normal = Vec3::UnitZ();  // unit normal of the disc plane
};

// Angle between the velocity and the disc plane; 0 at zero velocity.
double frisbee_angle_of_attack(const FrisbeeState& s);
Vec3 frisbee_acceleration(const FrisbeeState& s, const FrisbeeParams& p);
FrisbeeState frisbee_step(const FrisbeeState& s, const FrisbeeParams& p, double dt);

// Disc normal giving angle of attack `alpha` for this velocity, with the disc
// banked level (normal in the vertical plane through the velocity).
Vec3 disc_normal_for(const Vec3& velocity, double alpha);

// --------------------------------------------------------------- multirotor

struct MultirotorParams {
  double g = 9.81;
  double ixx = 0.0075, iyy = 0.0075, izz = 0.013;  // kg m^2
};

// State layout: [x y z | vx vy vz | phi theta psi | p q r].
inline constexpr int kRotorStates = 12;
inline constexpr int kRotorInputs = 4;
using RotorState = Eigen::Matrix<double, kRotorStates, 1>;
using RotorInput = Eigen::Matrix<double, kRotorInputs, 1>;

struct DiscreteLinearModel {
  Eigen::Matrix<double, kRotorStates, kRotorStates> A;
  Eigen::Matrix<double, kRotorStates, kRotorInputs> B;
  RotorState c;  // affine gravity term
  double dt = 0.05;

  RotorState step(const RotorState& x, const RotorInput& u) const { return A * x + B * u + c; }
};

// Continuous-time xdot = Ac x + Bc u + cc.
void multirotor_continuous(const MultirotorParams& p,
                           Eigen::Matrix<double, kRotorStates, kRotorStates>& Ac,
                           Eigen::Matrix<double, kRotorStates, kRotorInputs>& Bc,
                           RotorState& cc);

// Exact zero-order-hold discretisation (the augmented generator is nilpotent).
DiscreteLinearModel discretize_multirotor(const MultirotorParams& p, double dt);

RotorState multirotor_step(const RotorState& x, const RotorInput& u,
                           const MultirotorParams& p, double dt);

RotorInput hover_input(const MultirotorParams& p);

// ------------------------------------------------------------- observation

struct NoiseSpec {
  double sigma_obs = 0.0;
  std::uint64_t seed = 0;
};

// Adds i.i.d. N(0, sigma^2) noise to observable coordinates.
class Observer {
 public:
  explicit Observer(NoiseSpec spec);
  Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& truth);
  const NoiseSpec& spec() const { return spec_; }

 private:
  NoiseSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace acpmpc
