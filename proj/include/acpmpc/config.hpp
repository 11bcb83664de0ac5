#pragma once

// Experiment configuration: one JSON document per run of the tool.
// Unknown keys are rejected; every omitted key takes the scenario default.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "acpmpc/acp.hpp"
#include "acpmpc/dynamics.hpp"
#include "acpmpc/mpc.hpp"
#include "acpmpc/predictor.hpp"

namespace acpmpc {

enum class Scenario { pendulum_demo, frisbee_avoidance, synthetic_scores };
const char* to_string(Scenario s);
Scenario parse_scenario(const std::string& s);

struct Range {
  double lo = 0.0, hi = 0.0;
};

struct PendulumScenario {
  PendulumParams params;
  PendulumState initial{2.0, 2.5, 0.0, 0.0};
  double dt = 0.02;
  int steps = 3000;  // lookahead comes from predictor.horizon
};

// Launch distribution for the frisbee, relative to the drone's start.
struct FrisbeeScenario {
  FrisbeeParams params;
  Vec3 drone_start{0.0, 0.0, 3.0};
  Range distance{22.0, 30.0};       // horizontal launch distance, m
  Range azimuth{-0.5, 0.5};         // launch bearing around +x, rad
  Range height_offset{-0.5, 0.5};   // launch height relative to the drone, m
  Range speed{16.0, 20.0};          // m/s
  Range attack{0.0, 0.15};          // launch angle of attack, rad
  Range spin{30.0, 60.0};           // rad/s
  double aim_cone = 0.02;           // half-angle around the nominal aim, rad
  double duration = 8.0;            // s
  int substeps = 4;                 // frisbee RK4 steps per control step
};

struct SyntheticScenario {
  int streams = 20;
  int steps = 5000;
  double score_scale = 1.0;  // scores uniform in [0, score_scale]
};

struct ExperimentConfig {
  Scenario scenario = Scenario::frisbee_avoidance;
  AcpParams acp;
  PredictorConfig predictor;
  MpcConfig mpc = MpcConfig::defaults();
  double sigma_obs = 0.02;
  PendulumScenario pendulum;
  FrisbeeScenario frisbee;
  SyntheticScenario synthetic;
  int num_runs = 100;
  std::uint64_t seed_base = 1;
  UqMethod uq_method = UqMethod::acp;
  bool compare_ekf = true;
  std::string output_dir = "out";

  void validate() const;
};

// Reported with the JSON line (0 when unknown) and the dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0, std::string field = {});
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

ExperimentConfig default_config(Scenario s);

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

}  // namespace acpmpc
