#include "acpmpc/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace acpmpc {

using nlohmann::json;

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::pendulum_demo: return "pendulum-demo";
    case Scenario::frisbee_avoidance: return "frisbee-avoidance";
    case Scenario::synthetic_scores: return "synthetic-scores";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& s) {
  if (s == "pendulum-demo") return Scenario::pendulum_demo;
  if (s == "frisbee-avoidance") return Scenario::frisbee_avoidance;
  if (s == "synthetic-scores") return Scenario::synthetic_scores;
  throw std::invalid_argument("unknown scenario '" + s +
                              "' (pendulum-demo | frisbee-avoidance | synthetic-scores)");
}

ConfigError::ConfigError(const std::string& msg, int line, std::string field)
    : std::runtime_error([&] {
        std::string m = "config error";
        if (line > 0) m += " at line " + std::to_string(line);
        if (!field.empty()) m += " in field '" + field + "'";
        return m + ": " + msg;
      }()),
      line_(line),
      field_(std::move(field)) {}

namespace {

const std::vector<double> kExampleRates{0.0008, 0.0015, 0.003, 0.005, 0.009,
                                        0.017,  0.03,   0.05,  0.08};
const std::vector<double> kTableRates{0.0008, 0.0015, 0.003, 0.005, 0.009,
                                      0.017,  0.03,   0.05,  0.08,  0.13};

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", 0, path_.empty() ? "<root>" : path_);
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(type_hint<T>(), 0, field(key));
    }
  }

  void get_size(const char* key, std::size_t& out) {
    long long v = static_cast<long long>(out);
    get(key, v);
    if (v < 0) throw ConfigError("must be nonnegative", 0, field(key));
    out = static_cast<std::size_t>(v);
  }

  template <int N>
  void get_vec(const char* key, Eigen::Matrix<double, N, 1>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    std::vector<double> v;
    try {
      v = it->template get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("expected an array of numbers", 0, field(key));
    }
    if (static_cast<int>(v.size()) != N)
      throw ConfigError("expected " + std::to_string(N) + " entries, got " +
                            std::to_string(v.size()),
                        0, field(key));
    for (int i = 0; i < N; ++i) out(i) = v[i];
  }

  void get_range(const char* key, Range& r) {
    Eigen::Vector2d v(r.lo, r.hi);
    get_vec<2>(key, v);
    if (v(0) > v(1)) throw ConfigError("range lower bound exceeds upper bound", 0, field(key));
    r = {v(0), v(1)};
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Reader(it == j_.end() ? empty : *it, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key", 0, field(it.key().c_str()));
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <class T>
  static std::string type_hint() {
    if constexpr (std::is_same_v<T, bool>) return "expected a boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "expected a string";
    else if constexpr (std::is_integral_v<T>) return "expected an integer";
    else if constexpr (std::is_floating_point_v<T>) return "expected a number";
    else return "unexpected type";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_config(const json& root, ExperimentConfig& c) {
  Reader r(root, "");
  std::string scen = to_string(c.scenario);
  r.get("scenario", scen);
  r.get("delta", c.acp.target_miscoverage);
  r.get("learning_rates", c.acp.learning_rates);
  r.get_size("window", c.acp.window_size);
  r.get("r_max", c.acp.r_max);
  {
    Reader f = r.child("facp");
    f.get("eta", c.acp.facp_eta);
    f.get("sigma_mix", c.acp.facp_sigma_mix);
    f.finish();
  }
  {
    Reader p = r.child("predictor");
    p.get("embedding_length", c.predictor.embedding_length);
    p.get("page_columns", c.predictor.page_columns);
    p.get("horizon", c.predictor.horizon);
    p.get("process_noise", c.predictor.process_noise);
    p.get("measurement_noise", c.predictor.measurement_noise);
    p.get("use_ekf", c.predictor.use_ekf);
    p.get("iterative_tail", c.predictor.iterative_tail);
    p.get("known_noise_rank", c.predictor.known_noise_rank);
    p.finish();
  }
  {
    Reader m = r.child("mpc");
    MpcConfig& k = c.mpc;
    m.get("horizon", k.horizon);
    m.get("dt", k.dt);
    m.get_vec<kRotorStates>("q_diag", k.q_diag);
    m.get_vec<kRotorInputs>("r_diag", k.r_diag);
    m.get_vec<kRotorStates>("goal", k.goal);
    m.get("d_safe", k.d_safe);
    m.get("lipschitz", k.lipschitz);
    m.get_vec<kRotorInputs>("u_min", k.u_min);
    m.get_vec<kRotorInputs>("u_max", k.u_max);
    m.get("attitude_limit", k.attitude_limit);
    m.get("scp_max_iterations", k.scp_max_iterations);
    m.get("trust_radius", k.trust_radius);
    m.get("min_trust_radius", k.min_trust_radius);
    m.get("scp_tolerance", k.scp_tolerance);
    Reader v = m.child("vehicle");
    v.get("g", k.vehicle.g);
    v.get("ixx", k.vehicle.ixx);
    v.get("iyy", k.vehicle.iyy);
    v.get("izz", k.vehicle.izz);
    v.finish();
    m.finish();
  }
  {
    Reader n = r.child("noise");
    n.get("sigma_obs", c.sigma_obs);
    n.finish();
  }
  {
    Reader p = r.child("pendulum");
    PendulumScenario& s = c.pendulum;
    p.get("m1", s.params.m1);
    p.get("m2", s.params.m2);
    p.get("l1", s.params.l1);
    p.get("l2", s.params.l2);
    p.get("g", s.params.g);
    p.get("theta1", s.initial.theta1);
    p.get("theta2", s.initial.theta2);
    p.get("omega1", s.initial.omega1);
    p.get("omega2", s.initial.omega2);
    p.get("dt", s.dt);
    p.get("steps", s.steps);
    p.finish();
  }
  {
    Reader f = r.child("frisbee");
    FrisbeeScenario& s = c.frisbee;
    f.get("cl0", s.params.cl0);
    f.get("cl_alpha", s.params.cl_alpha);
    f.get("cd0", s.params.cd0);
    f.get("cd_alpha", s.params.cd_alpha);
    f.get("alpha0", s.params.alpha0);
    f.get("area", s.params.area);
    f.get("mass", s.params.mass);
    f.get("air_density", s.params.air_density);
    f.get("g", s.params.g);
    f.get_vec<3>("drone_start", s.drone_start);
    f.get_range("distance", s.distance);
    f.get_range("azimuth", s.azimuth);
    f.get_range("height_offset", s.height_offset);
    f.get_range("speed", s.speed);
    f.get_range("attack", s.attack);
    f.get_range("spin", s.spin);
    f.get("aim_cone", s.aim_cone);
    f.get("duration", s.duration);
    f.get("substeps", s.substeps);
    f.finish();
  }
  {
    Reader s = r.child("synthetic");
    s.get("streams", c.synthetic.streams);
    s.get("steps", c.synthetic.steps);
    s.get("score_scale", c.synthetic.score_scale);
    s.finish();
  }
  r.get("num_runs", c.num_runs);
  r.get("seed_base", c.seed_base);
  std::string method = to_string(c.uq_method);
  r.get("uq_method", method);
  try {
    c.uq_method = parse_uq_method(method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, "uq_method");
  }
  r.get("compare_ekf", c.compare_ekf);
  {
    Reader o = r.child("output");
    o.get("dir", c.output_dir);
    o.finish();
  }
  r.finish();
}

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
}

// First line mentioning the last component of a dotted field path.
int line_of_field(const std::string& text, const std::string& field) {
  if (field.empty()) return 0;
  const auto dot = field.rfind('.');
  const std::string key = "\"" + (dot == std::string::npos ? field : field.substr(dot + 1)) + "\"";
  const auto pos = text.find(key);
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

}  // namespace

void ExperimentConfig::validate() const {
  auto wrap = [](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), 0, field);
    }
  };
  wrap("acp", [&] { acp.validate(); });
  wrap("predictor", [&] { predictor.validate(); });
  wrap("mpc", [&] { mpc.validate(); });
  if (!(sigma_obs >= 0.0)) throw ConfigError("must be >= 0", 0, "noise.sigma_obs");
  if (num_runs < 1) throw ConfigError("must be >= 1", 0, "num_runs");
  if (scenario == Scenario::frisbee_avoidance && predictor.horizon != mpc.horizon)
    throw ConfigError("must equal mpc.horizon for frisbee-avoidance", 0, "predictor.horizon");
  if (!(pendulum.dt > 0.0)) throw ConfigError("must be positive", 0, "pendulum.dt");
  if (pendulum.steps < 1) throw ConfigError("must be >= 1", 0, "pendulum.steps");
  if (!(pendulum.params.m1 > 0 && pendulum.params.m2 > 0 && pendulum.params.l1 > 0 &&
        pendulum.params.l2 > 0))
    throw ConfigError("masses and lengths must be positive", 0, "pendulum");
  const FrisbeeParams& fp = frisbee.params;
  if (!(fp.mass > 0 && fp.area > 0 && fp.air_density > 0))
    throw ConfigError("mass, area and air_density must be positive", 0, "frisbee");
  if (!(frisbee.distance.lo > 0.0)) throw ConfigError("must be positive", 0, "frisbee.distance");
  if (!(frisbee.speed.lo > 0.0)) throw ConfigError("must be positive", 0, "frisbee.speed");
  if (!(frisbee.aim_cone >= 0.0)) throw ConfigError("must be >= 0", 0, "frisbee.aim_cone");
  if (!(frisbee.duration > 0.0)) throw ConfigError("must be positive", 0, "frisbee.duration");
  if (frisbee.substeps < 1) throw ConfigError("must be >= 1", 0, "frisbee.substeps");
  if (synthetic.streams < 1) throw ConfigError("must be >= 1", 0, "synthetic.streams");
  if (synthetic.steps < 1) throw ConfigError("must be >= 1", 0, "synthetic.steps");
  if (!(synthetic.score_scale > 0.0))
    throw ConfigError("must be positive", 0, "synthetic.score_scale");
}

ExperimentConfig default_config(Scenario s) {
  ExperimentConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::pendulum_demo:
      c.acp.target_miscoverage = 0.1;
      c.acp.learning_rates = kExampleRates;
      c.acp.window_size = 200;
      c.acp.r_max = 4.0;
      c.predictor.embedding_length = 25;
      c.predictor.page_columns = 6;
      c.predictor.horizon = 6;
      c.sigma_obs = 0.005;
      c.num_runs = 1;
      c.compare_ekf = false;
      break;
    case Scenario::frisbee_avoidance:
      c.acp.target_miscoverage = 0.05;
      c.acp.learning_rates = kTableRates;
      c.acp.window_size = 30;
      c.acp.r_max = 1.0;
      c.predictor.embedding_length = 10;
      c.predictor.page_columns = 6;
      c.predictor.horizon = c.mpc.horizon;
      c.mpc.goal.head<3>() = c.frisbee.drone_start;
      c.sigma_obs = 0.02;
      c.num_runs = 100;
      break;
    case Scenario::synthetic_scores:
      c.acp.target_miscoverage = 0.1;
      c.acp.learning_rates = kTableRates;
      c.acp.window_size = 100;
      c.acp.r_max = 1.0;
      c.num_runs = 1;
      c.compare_ekf = false;
      break;
  }
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("top level must be an object", 0, "<root>");
  Scenario s = Scenario::frisbee_avoidance;
  if (j.contains("scenario")) {
    if (!j["scenario"].is_string()) throw ConfigError("expected a string", 0, "scenario");
    try {
      s = parse_scenario(j["scenario"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), 0, "scenario");
    }
  }
  ExperimentConfig c = default_config(s);
  read_config(j, c);
  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(e.what(), line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    if (e.line() > 0) throw;
    const std::string full = e.what();
    const std::string prefix = "in field '" + e.field() + "': ";
    const auto at = full.find(prefix);
    const std::string msg = at == std::string::npos ? full : full.substr(at + prefix.size());
    throw ConfigError(msg, line_of_field(text, e.field()), e.field());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " [" + path + "]");
  }
}

namespace {

template <int N>
std::vector<double> vec(const Eigen::Matrix<double, N, 1>& v) {
  return std::vector<double>(v.data(), v.data() + N);
}

json range(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["scenario"] = to_string(c.scenario);
  j["delta"] = c.acp.target_miscoverage;
  j["learning_rates"] = c.acp.learning_rates;
  j["window"] = c.acp.window_size;
  j["r_max"] = c.acp.r_max;
  j["facp"] = {{"eta", c.acp.facp_eta}, {"sigma_mix", c.acp.facp_sigma_mix}};
  j["predictor"] = {{"embedding_length", c.predictor.embedding_length},
                    {"page_columns", c.predictor.page_columns},
                    {"horizon", c.predictor.horizon},
                    {"process_noise", c.predictor.process_noise},
                    {"measurement_noise", c.predictor.measurement_noise},
                    {"use_ekf", c.predictor.use_ekf},
                    {"iterative_tail", c.predictor.iterative_tail},
                    {"known_noise_rank", c.predictor.known_noise_rank}};
  const MpcConfig& m = c.mpc;
  j["mpc"] = {{"horizon", m.horizon},
              {"dt", m.dt},
              {"q_diag", vec(m.q_diag)},
              {"r_diag", vec(m.r_diag)},
              {"goal", vec(m.goal)},
              {"d_safe", m.d_safe},
              {"lipschitz", m.lipschitz},
              {"u_min", vec(m.u_min)},
              {"u_max", vec(m.u_max)},
              {"attitude_limit", m.attitude_limit},
              {"scp_max_iterations", m.scp_max_iterations},
              {"trust_radius", m.trust_radius},
              {"min_trust_radius", m.min_trust_radius},
              {"scp_tolerance", m.scp_tolerance},
              {"vehicle",
               {{"g", m.vehicle.g},
                {"ixx", m.vehicle.ixx},
                {"iyy", m.vehicle.iyy},
                {"izz", m.vehicle.izz}}}};
  j["noise"] = {{"sigma_obs", c.sigma_obs}};
  const PendulumScenario& p = c.pendulum;
  j["pendulum"] = {{"m1", p.params.m1},         {"m2", p.params.m2},
                   {"l1", p.params.l1},         {"l2", p.params.l2},
                   {"g", p.params.g},           {"theta1", p.initial.theta1},
                   {"theta2", p.initial.theta2}, {"omega1", p.initial.omega1},
                   {"omega2", p.initial.omega2}, {"dt", p.dt},
                   {"steps", p.steps}};
  const FrisbeeScenario& f = c.frisbee;
  j["frisbee"] = {{"cl0", f.params.cl0},
                  {"cl_alpha", f.params.cl_alpha},
                  {"cd0", f.params.cd0},
                  {"cd_alpha", f.params.cd_alpha},
                  {"alpha0", f.params.alpha0},
                  {"area", f.params.area},
                  {"mass", f.params.mass},
                  {"air_density", f.params.air_density},
                  {"g", f.params.g},
                  {"drone_start", vec(f.drone_start)},
                  {"distance", range(f.distance)},
                  {"azimuth", range(f.azimuth)},
                  {"height_offset", range(f.height_offset)},
                  {"speed", range(f.speed)},
                  {"attack", range(f.attack)},
                  {"spin", range(f.spin)},
                  {"aim_cone", f.aim_cone},
                  {"duration", f.duration},
                  {"substeps", f.substeps}};
  j["synthetic"] = {{"streams", c.synthetic.streams},
                    {"steps", c.synthetic.steps},
                    {"score_scale", c.synthetic.score_scale}};
  j["num_runs"] = c.num_runs;
  j["seed_base"] = c.seed_base;
  j["uq_method"] = to_string(c.uq_method);
  j["compare_ekf"] = c.compare_ekf;
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

}  // namespace acpmpc
