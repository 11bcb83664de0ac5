#pragma once

// File outputs. runlog.csv holds every step of every run, one run after
// another; a run starts wherever `step` returns to 0. Numbers are printed
// with 17 significant digits so a parse reproduces them exactly.

#include <string>
#include <vector>

#include "json.hpp"

#include "acpmpc/harness.hpp"

namespace acpmpc {

class ExportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> runlog_columns(int horizon);

void write_runlog_csv(const std::string& path, const std::vector<RunRecord>& records,
                      int horizon);
// Rows only; seeds and methods are not part of the log.
std::vector<RunRecord> read_runlog_csv(const std::string& path);

nlohmann::json summary_to_json(const SummaryStats& s);
// `baseline` may be null; when present it is nested under "ekf_baseline".
nlohmann::json summary_document(const SummaryStats& s, const SummaryStats* baseline,
                                const ExperimentConfig& c);
void write_json(const std::string& path, const nlohmann::json& j);

void write_pendulum_csv(const std::string& path, const PendulumReport& r);
nlohmann::json pendulum_summary(const PendulumReport& r, const ExperimentConfig& c);

void write_streams_csv(const std::string& path, const std::vector<StreamResult>& r);
nlohmann::json streams_summary(const std::vector<StreamResult>& r, const ExperimentConfig& c);

// Creates the directory (and parents) if needed.
void ensure_directory(const std::string& dir);

}  // namespace acpmpc
