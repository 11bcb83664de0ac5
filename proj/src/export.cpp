#include "acpmpc/export.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace acpmpc {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// NaN becomes null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot open '" + path + "' for writing");
  return out;
}

void check(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw ExportError("write to '" + path + "' failed");
}

const char* const kStateNames[kRotorStates] = {"x",   "y",     "z",   "vx", "vy", "vz",
                                               "phi", "theta", "psi", "p",  "q",  "r"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_num(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ExportError(path + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::vector<std::string> runlog_columns(int horizon) {
  std::vector<std::string> c{"t", "step"};
  for (const char* n : kStateNames) c.emplace_back(std::string("robot_") + n);
  for (const char* a : {"x", "y", "z"}) c.emplace_back(std::string("obst_") + a);
  for (const char* a : {"x", "y", "z"}) c.emplace_back(std::string("obs_") + a);
  for (int tau = 1; tau <= horizon; ++tau) {
    const std::string s = std::to_string(tau);
    c.push_back("pred_" + s + "_x");
    c.push_back("pred_" + s + "_y");
    c.push_back("pred_" + s + "_z");
    c.push_back("region_" + s);
    c.push_back("delta_" + s);
    c.push_back("err_flag_" + s);
  }
  c.emplace_back("feasible");
  c.emplace_back("dist");
  return c;
}

void write_runlog_csv(const std::string& path, const std::vector<RunRecord>& records,
                      int horizon) {
  auto out = open_out(path);
  const auto cols = runlog_columns(horizon);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  const auto H = static_cast<std::size_t>(horizon);
  for (const auto& rec : records) {
    for (const auto& r : rec.rows) {
      if (r.predictions.size() < H || r.regions.size() < H || r.deltas.size() < H ||
          r.err_flags.size() < H)
        throw ExportError("row at step " + std::to_string(r.step) + " is shorter than the horizon");
      out << num(r.t) << ',' << r.step;
      for (int j = 0; j < kRotorStates; ++j) out << ',' << num(r.robot(j));
      for (int j = 0; j < 3; ++j) out << ',' << num(r.obstacle(j));
      for (int j = 0; j < 3; ++j) out << ',' << num(r.observation(j));
      for (std::size_t k = 0; k < H; ++k) {
        for (int j = 0; j < 3; ++j) out << ',' << num(r.predictions[k](j));
        out << ',' << num(r.regions[k]) << ',' << num(r.deltas[k]) << ',' << r.err_flags[k];
      }
      out << ',' << (r.feasible ? 1 : 0) << ',' << num(r.dist) << '\n';
    }
  }
  check(out, path);
}

std::vector<RunRecord> read_runlog_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExportError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ExportError(path + ": missing header");
  const auto header = split(line);
  const int fixed = 2 + kRotorStates + 6 + 2;
  if (static_cast<int>(header.size()) < fixed || (header.size() - fixed) % 6 != 0)
    throw ExportError(path + ": unexpected column count");
  const int H = static_cast<int>(header.size() - fixed) / 6;
  if (header != runlog_columns(H)) throw ExportError(path + ": header does not match the schema");

  std::vector<RunRecord> recs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ExportError(path + ":" + std::to_string(lineno) + ": wrong number of cells");
    std::size_t c = 0;
    auto next = [&] { return parse_num(cells[c++], path, lineno); };
    StepRow r;
    r.t = next();
    r.step = static_cast<int>(next());
    for (int j = 0; j < kRotorStates; ++j) r.robot(j) = next();
    for (int j = 0; j < 3; ++j) r.obstacle(j) = next();
    for (int j = 0; j < 3; ++j) r.observation(j) = next();
    for (int k = 0; k < H; ++k) {
      Vec3 p;
      for (int j = 0; j < 3; ++j) p(j) = next();
      r.predictions.push_back(p);
      r.regions.push_back(next());
      r.deltas.push_back(next());
      r.err_flags.push_back(static_cast<int>(next()));
    }
    r.feasible = next() != 0.0;
    r.dist = next();
    if (r.step == 0 || recs.empty()) recs.emplace_back();
    recs.back().rows.push_back(std::move(r));
  }
  return recs;
}

json summary_to_json(const SummaryStats& s) {
  json j;
  j["runs"] = s.runs;
  j["feasible_runs"] = s.feasible_runs;
  j["collisions_in_feasible"] = s.collisions_in_feasible;
  j["pct_feasible_run"] = jnum(s.pct_feasible_run);
  j["pct_feasible_solve"] = jnum(s.pct_feasible_solve);
  j["pct_success"] = jnum(s.pct_success);
  j["dmin_mean"] = jnum(s.dmin_mean);
  j["dmin_std"] = jnum(s.dmin_std);
  json cov = json::array(), cnt = json::array(), inband = json::array();
  for (std::size_t k = 0; k < s.coverage.size(); ++k) {
    cov.push_back(jnum(s.coverage[k]));
    cnt.push_back(s.coverage_count[k]);
    inband.push_back(static_cast<bool>(s.miscoverage_in_band[k]));
  }
  j["coverage"] = cov;
  j["coverage_count"] = cnt;
  const CoverageBand& b = s.theorem1_band;
  j["theorem1_band"] = {{"delta", b.delta},         {"gamma", b.gamma},
                        {"T", jnum(b.T)},           {"p1", jnum(b.p1)},
                        {"p2", jnum(b.p2)},         {"miscoverage_lower", jnum(b.lower)},
                        {"miscoverage_upper", jnum(b.upper)}, {"within", inband}};
  j["safe_step_fraction"] = jnum(s.safe_step_fraction);
  j["theorem2_lower"] = jnum(s.theorem2_lower);
  j["theorem2_holds"] = s.theorem2_holds;
  return j;
}

json summary_document(const SummaryStats& s, const SummaryStats* baseline,
                      const ExperimentConfig& c) {
  json j = summary_to_json(s);
  j["scenario"] = to_string(c.scenario);
  j["uq_method"] = to_string(c.uq_method);
  j["delta"] = c.acp.target_miscoverage;
  j["seed_base"] = c.seed_base;
  if (baseline) {
    json b = summary_to_json(*baseline);
    b["uq_method"] = to_string(UqMethod::ekf_gaussian);
    j["ekf_baseline"] = b;
  }
  return j;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  check(out, path);
}

void write_pendulum_csv(const std::string& path, const PendulumReport& r) {
  auto out = open_out(path);
  const int H = r.horizon;
  out << "t";
  for (const char* n : kPendulumCoords) out << ",true_" << n;
  for (const char* n : kPendulumCoords) out << ",obs_" << n;
  for (const char* n : kPendulumCoords)
    for (int tau = 1; tau <= H; ++tau)
      out << ",pred_" << n << '_' << tau << ",score_" << n << '_' << tau << ",region_" << n
          << '_' << tau << ",err_flag_" << n << '_' << tau;
  out << '\n';
  for (const auto& row : r.rows) {
    out << num(row.t);
    for (int i = 0; i < 4; ++i) out << ',' << num(row.truth(i));
    for (int i = 0; i < 4; ++i) out << ',' << num(row.observation(i));
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < H; ++k)
        out << ',' << num(row.prediction[i][k]) << ',' << num(row.score[i][k]) << ','
            << num(row.region[i][k]) << ',' << row.err_flag[i][k];
    out << '\n';
  }
  check(out, path);
}

json pendulum_summary(const PendulumReport& r, const ExperimentConfig& c) {
  json j;
  j["scenario"] = to_string(Scenario::pendulum_demo);
  j["delta"] = c.acp.target_miscoverage;
  j["learning_rates"] = c.acp.learning_rates;
  j["steps"] = r.rows.size();
  json cov = json::object();
  for (int i = 0; i < 4; ++i) {
    json per = json::array();
    for (double v : r.coverage[i]) per.push_back(jnum(v));
    cov[kPendulumCoords[i]] = {{"one_step_coverage", jnum(r.one_step_coverage[i])},
                               {"one_step_miscoverage", jnum(1.0 - r.one_step_coverage[i])},
                               {"coverage", per},
                               {"updates", r.updates[i]}};
  }
  j["coordinates"] = cov;
  j["reference_band"] = {{"gamma", r.band.gamma},
                         {"T", r.band.T},
                         {"p1", jnum(r.band.p1)},
                         {"p2", jnum(r.band.p2)},
                         {"miscoverage_lower", jnum(r.band.lower)},
                         {"miscoverage_upper", jnum(r.band.upper)}};
  return j;
}

void write_streams_csv(const std::string& path, const std::vector<StreamResult>& r) {
  auto out = open_out(path);
  out << "stream,gamma,T,miscoverage,bound,p1,p2,within_bound,within_band\n";
  for (const auto& s : r)
    out << s.stream << ',' << num(s.gamma) << ',' << s.T << ',' << num(s.miscoverage) << ','
        << num(s.bound) << ',' << num(s.p.p1) << ',' << num(s.p.p2) << ','
        << (s.within_bound ? 1 : 0) << ',' << (s.within_band ? 1 : 0) << '\n';
  check(out, path);
}

json streams_summary(const std::vector<StreamResult>& r, const ExperimentConfig& c) {
  json j;
  j["scenario"] = to_string(Scenario::synthetic_scores);
  j["delta"] = c.acp.target_miscoverage;
  j["streams"] = c.synthetic.streams;
  j["steps"] = c.synthetic.steps;
  int ok_bound = 0, ok_band = 0;
  double worst = 0.0;
  for (const auto& s : r) {
    ok_bound += s.within_bound;
    ok_band += s.within_band;
    worst = std::max(worst, std::abs(s.miscoverage - c.acp.target_miscoverage) / s.bound);
  }
  j["cases"] = r.size();
  j["within_bound"] = ok_bound;
  j["within_band"] = ok_band;
  j["worst_bound_ratio"] = worst;
  json per = json::array();
  for (double g : c.acp.learning_rates) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : r)
      if (s.gamma == g) {
        sum += s.miscoverage;
        ++n;
      }
    const CoverageBound b = coverage_bound(static_cast<std::size_t>(c.synthetic.steps), g,
                                           c.acp.target_miscoverage);
    per.push_back({{"gamma", g},
                   {"mean_miscoverage", n ? sum / n : 0.0},
                   {"p1", b.p1},
                   {"p2", b.p2}});
  }
  j["per_gamma"] = per;
  return j;
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ExportError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace acpmpc
