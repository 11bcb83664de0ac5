#pragma once

// Adaptive conformal prediction regions for multistep forecasts.
//
// Single-rate (ACP) and multi-rate (FACP) quantile-level recursions over a
// sliding window of time-lagged nonconformity scores. The level recursion is
// kept unclamped; clamping to [0, 1] happens only when a region is emitted.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace acpmpc {

struct AcpParams {
  double target_miscoverage = 0.1;  // delta
  std::vector<double> learning_rates{0.005};
  std::size_t window_size = 100;
  double r_max = 1.0;
  double facp_eta = 2.5;
  double facp_sigma_mix = 1e-3;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

// Bounded FIFO of nonnegative scores for one lookahead index.
class ScoreWindow {
 public:
  explicit ScoreWindow(std::size_t capacity = 1, int horizon_index = 1);

  void push(double score);
  void clear() { scores_.clear(); }

  std::size_t size() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }
  std::size_t capacity() const { return capacity_; }
  int horizon_index() const { return horizon_index_; }

  // Insertion order, oldest first.
  const std::deque<double>& scores() const { return scores_; }

 private:
  std::deque<double> scores_;
  std::size_t capacity_;
  int horizon_index_;
};

struct PredictionRegion {
  double radius = 0.0;
  int horizon_index = 1;
  double effective_level = 0.0;
};

struct AcpTauState {
  double delta_raw = 0.1;
  ScoreWindow window;
  std::vector<std::uint8_t> error_history;
  std::size_t step_count = 0;

  static AcpTauState initial(const AcpParams& params, int horizon_index);
};

struct FacpState {
  std::vector<double> delta_raw;  // one level per learning rate
  std::vector<double> beliefs;
  ScoreWindow window;
  std::vector<std::uint8_t> error_history;  // errors of the aggregated region
  std::size_t step_count = 0;

  static FacpState initial(const AcpParams& params, int horizon_index);
};

// Euclidean norm of observed - predicted.
double nonconformity(const Eigen::Ref<const Eigen::VectorXd>& observed,
                     const Eigen::Ref<const Eigen::VectorXd>& predicted);

// Order-statistic index ceil((n + 1)(1 - level)), clamped below at 1.
std::size_t quantile_index(std::size_t n, double delta_eff);

// q-th smallest score of the window; r_max when q exceeds the window or the
// window is empty. Always capped at r_max.
PredictionRegion empirical_quantile(const ScoreWindow& window, double delta_eff,
                                    double r_max);

double effective_level(double delta_raw);
inline double effective_level(const AcpTauState& state) {
  return effective_level(state.delta_raw);
}

// One step of the lagged recursion for a single learning rate. Returns e_t.
int acp_update(AcpTauState& state, const AcpParams& params,
               double observed_score, const PredictionRegion& current_region);

// Largest miscoverage level at which the window region would still have
// covered `score`. 0 when the score exceeds r_max.
double realized_level(const ScoreWindow& window, double score, double r_max);

// Pinball loss of realized level beta against a candidate level.
double pinball_loss(double beta, double level, double delta);

// Per-rate regions C^(i) of the current window.
std::vector<PredictionRegion> facp_rate_regions(const FacpState& state,
                                                double r_max);

// Belief-weighted aggregated region.
PredictionRegion facp_region(const FacpState& state, double r_max);
double facp_mixed_level(const FacpState& state);

// Updates every rate against its own region, reweights beliefs and appends
// the score. `aggregated_region` is the region the aggregated error flag is
// recorded against. Returns that flag.
int facp_update(FacpState& state, const AcpParams& params, double observed_score,
                std::span<const PredictionRegion> per_rate_regions,
                const PredictionRegion& aggregated_region);

struct CoverageBound {
  double p1 = 0.0;
  double p2 = 0.0;
};

// Finite-sample constants of the one-step coverage guarantee.
CoverageBound coverage_bound(std::size_t T, double gamma, double delta0);

// Two-sided deterministic bound on |mean(e) - delta| after T updates.
double miscoverage_deviation_bound(std::size_t T, double gamma, double delta0);

// Outcome of one lookahead index at one time step.
struct TauStepRecord {
  std::optional<double> score;
  int error_flag = -1;  // -1 when no lagged score was available
  double delta_level = 0.0;  // belief-weighted raw level after the update
  PredictionRegion region;    // C_{t+1}^tau
};

// Multistep manager: keeps the last H prediction vectors, forms the lagged
// scores ||y_t - yhat_{t-tau}^tau|| and runs one FACP recursion per tau.
// A single learning rate reduces to plain ACP.
class MultiStepAcp {
 public:
  MultiStepAcp(AcpParams params, int horizon);

  // predictions[tau-1] = yhat_t^tau; pass an empty vector when the predictor
  // produced nothing this step.
  const std::vector<TauStepRecord>& step(
      const Eigen::Ref<const Eigen::VectorXd>& observation,
      const std::vector<Eigen::VectorXd>& predictions);

  // Regions C_{t+1}^tau emitted by the last step (r_max before any data).
  const std::vector<PredictionRegion>& regions() const { return regions_; }
  const std::vector<TauStepRecord>& last_records() const { return records_; }
  const FacpState& state(int tau) const { return states_.at(tau - 1); }
  const AcpParams& params() const { return params_; }
  int horizon() const { return horizon_; }

 private:
  AcpParams params_;
  int horizon_;
  std::vector<FacpState> states_;
  std::vector<PredictionRegion> regions_;
  std::vector<std::vector<PredictionRegion>> rate_regions_;
  std::deque<std::vector<Eigen::VectorXd>> past_predictions_;  // front = newest
  std::vector<TauStepRecord> records_;
};

}  // namespace acpmpc
