#include "acpmpc/acp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace acpmpc {

namespace {

// Products such as (n + 1) * 0.9 that are mathematically integers must not be
// pushed to the next index by representation error.
constexpr double kIndexSlack = 1e-12;

std::vector<double> sorted_scores(const ScoreWindow& window) {
  std::vector<double> v(window.scores().begin(), window.scores().end());
  std::stable_sort(v.begin(), v.end());
  return v;
}

}  // namespace

void AcpParams::validate() const {
  if (!(target_miscoverage > 0.0 && target_miscoverage < 1.0))
    throw std::invalid_argument("target miscoverage must lie in (0,1)");
  if (learning_rates.empty())
    throw std::invalid_argument("at least one learning rate is required");
  for (double g : learning_rates)
    if (!(g > 0.0) || !std::isfinite(g))
      throw std::invalid_argument("learning rates must be positive");
  if (window_size < 1) throw std::invalid_argument("window size must be >= 1");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  if (facp_eta < 0.0 || facp_sigma_mix < 0.0 || facp_sigma_mix > 1.0)
    throw std::invalid_argument("FACP reweighting knobs out of range");
}

ScoreWindow::ScoreWindow(std::size_t capacity, int horizon_index)
    : capacity_(capacity), horizon_index_(horizon_index) {
  if (capacity_ < 1) throw std::invalid_argument("window capacity must be >= 1");
  if (horizon_index_ < 1) throw std::invalid_argument("horizon index must be >= 1");
}

void ScoreWindow::push(double score) {
  if (!(score >= 0.0) || !std::isfinite(score))
    throw std::invalid_argument("scores must be finite and nonnegative, got " +
                                std::to_string(score));
  scores_.push_back(score);
  while (scores_.size() > capacity_) scores_.pop_front();
}

AcpTauState AcpTauState::initial(const AcpParams& params, int horizon_index) {
  params.validate();
  AcpTauState s;
  s.delta_raw = params.target_miscoverage;
  s.window = ScoreWindow(params.window_size, horizon_index);
  return s;
}

FacpState FacpState::initial(const AcpParams& params, int horizon_index) {
  params.validate();
  FacpState s;
  const std::size_t k = params.learning_rates.size();
  s.delta_raw.assign(k, params.target_miscoverage);
  s.beliefs.assign(k, 1.0 / static_cast<double>(k));
  s.window = ScoreWindow(params.window_size, horizon_index);
  return s;
}

double nonconformity(const Eigen::Ref<const Eigen::VectorXd>& observed,
                     const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  if (observed.size() != predicted.size())
    throw std::invalid_argument("nonconformity: dimension mismatch (" +
                                std::to_string(observed.size()) + " vs " +
                                std::to_string(predicted.size()) + ")");
  return (observed - predicted).norm();
}

std::size_t quantile_index(std::size_t n, double delta_eff) {
  const double x = static_cast<double>(n + 1) * (1.0 - delta_eff);
  const double q = std::ceil(x - kIndexSlack);
  return q < 1.0 ? 1 : static_cast<std::size_t>(q);
}

double effective_level(double delta_raw) { return std::clamp(delta_raw, 0.0, 1.0); }

PredictionRegion empirical_quantile(const ScoreWindow& window, double delta_eff,
                                    double r_max) {
  PredictionRegion region;
  region.horizon_index = window.horizon_index();
  region.effective_level = std::clamp(delta_eff, 0.0, 1.0);
  const std::size_t n = window.size();
  const std::size_t q = quantile_index(n, region.effective_level);
  if (n == 0 || q > n) {
    region.radius = r_max;
    return region;
  }
  std::vector<double> v(window.scores().begin(), window.scores().end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q - 1), v.end());
  region.radius = std::min(v[q - 1], r_max);
  return region;
}

int acp_update(AcpTauState& state, const AcpParams& params, double observed_score,
               const PredictionRegion& current_region) {
  const int e = observed_score <= current_region.radius ? 0 : 1;
  const double gamma = params.learning_rates.front();
  state.delta_raw += gamma * (params.target_miscoverage - e);
  state.window.push(observed_score);
  state.error_history.push_back(static_cast<std::uint8_t>(e));
  ++state.step_count;
  return e;
}

double realized_level(const ScoreWindow& window, double score, double r_max) {
  if (score > r_max) return 0.0;
  const std::size_t n = window.size();
  if (n == 0) return 1.0;
  const std::vector<double> s = sorted_scores(window);
  // k: 1-based index of the first order statistic >= score (n + 1 if none).
  const auto it = std::lower_bound(s.begin(), s.end(), score);
  const std::size_t k = static_cast<std::size_t>(it - s.begin()) + 1;
  // Largest level on the grid 1 - j/(n+1) whose quantile index reaches k.
  if (k == 1) return 1.0;
  return 1.0 - static_cast<double>(k) / static_cast<double>(n + 1);
}

double pinball_loss(double beta, double level, double delta) {
  return delta * std::max(beta - level, 0.0) + (1.0 - delta) * std::max(level - beta, 0.0);
}

double facp_mixed_level(const FacpState& state) {
  double level = 0.0;
  for (std::size_t i = 0; i < state.beliefs.size(); ++i)
    level += state.beliefs[i] * effective_level(state.delta_raw[i]);
  return level;
}

std::vector<PredictionRegion> facp_rate_regions(const FacpState& state, double r_max) {
  std::vector<PredictionRegion> out;
  out.reserve(state.delta_raw.size());
  for (double d : state.delta_raw)
    out.push_back(empirical_quantile(state.window, effective_level(d), r_max));
  return out;
}

PredictionRegion facp_region(const FacpState& state, double r_max) {
  return empirical_quantile(state.window, facp_mixed_level(state), r_max);
}

int facp_update(FacpState& state, const AcpParams& params, double observed_score,
                std::span<const PredictionRegion> per_rate_regions,
                const PredictionRegion& aggregated_region) {
  const std::size_t k = params.learning_rates.size();
  if (per_rate_regions.size() != k || state.delta_raw.size() != k)
    throw std::invalid_argument("facp_update: regions not aligned with learning rates");
  const double delta = params.target_miscoverage;

  const double beta = realized_level(state.window, observed_score, params.r_max);
  std::vector<double> w(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double loss = pinball_loss(beta, effective_level(state.delta_raw[i]), delta);
    w[i] = state.beliefs[i] * std::exp(-params.facp_eta * loss);
    total += w[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(w.begin(), w.end(), 1.0);
    total = static_cast<double>(k);
  }
  const double sigma = params.facp_sigma_mix;
  for (std::size_t i = 0; i < k; ++i)
    state.beliefs[i] = (1.0 - sigma) * (w[i] / total) + sigma / static_cast<double>(k);
  const double norm = std::accumulate(state.beliefs.begin(), state.beliefs.end(), 0.0);
  for (double& p : state.beliefs) p /= norm;

  for (std::size_t i = 0; i < k; ++i) {
    const int ei = observed_score <= per_rate_regions[i].radius ? 0 : 1;
    state.delta_raw[i] += params.learning_rates[i] * (delta - ei);
  }

  const int e = observed_score <= aggregated_region.radius ? 0 : 1;
  state.window.push(observed_score);
  state.error_history.push_back(static_cast<std::uint8_t>(e));
  ++state.step_count;
  return e;
}

CoverageBound coverage_bound(std::size_t T, double gamma, double delta0) {
  if (T == 0) throw std::invalid_argument("coverage_bound: T must be >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("coverage_bound: gamma must be positive");
  if (!(delta0 > 0.0 && delta0 < 1.0))
    throw std::invalid_argument("coverage_bound: delta0 must lie in (0,1)");
  const double denom = static_cast<double>(T) * gamma;
  return {(delta0 + gamma) / denom, ((1.0 - delta0) + gamma) / denom};
}

double miscoverage_deviation_bound(std::size_t T, double gamma, double delta0) {
  const CoverageBound b = coverage_bound(T, gamma, delta0);
  return std::max(b.p1, b.p2);
}

MultiStepAcp::MultiStepAcp(AcpParams params, int horizon)
    : params_(std::move(params)), horizon_(horizon) {
  params_.validate();
  if (horizon_ < 1) throw std::invalid_argument("horizon must be >= 1");
  for (int tau = 1; tau <= horizon_; ++tau) {
    states_.push_back(FacpState::initial(params_, tau));
    regions_.push_back(facp_region(states_.back(), params_.r_max));
    rate_regions_.push_back(facp_rate_regions(states_.back(), params_.r_max));
  }
  records_.resize(static_cast<std::size_t>(horizon_));
  for (int tau = 1; tau <= horizon_; ++tau) {
    records_[tau - 1].region = regions_[tau - 1];
    records_[tau - 1].delta_level = params_.target_miscoverage;
  }
}

const std::vector<TauStepRecord>& MultiStepAcp::step(
    const Eigen::Ref<const Eigen::VectorXd>& observation,
    const std::vector<Eigen::VectorXd>& predictions) {
  if (!predictions.empty() && predictions.size() != static_cast<std::size_t>(horizon_))
    throw std::invalid_argument("MultiStepAcp::step: expected one prediction per lookahead");

  for (int tau = 1; tau <= horizon_; ++tau) {
    const std::size_t i = static_cast<std::size_t>(tau - 1);
    TauStepRecord& rec = records_[i];
    rec.score.reset();
    rec.error_flag = -1;
    FacpState& st = states_[i];

    if (past_predictions_.size() >= static_cast<std::size_t>(tau)) {
      const auto& made = past_predictions_[i];  // made tau steps ago
      if (!made.empty()) {
        const double r = nonconformity(observation, made[i]);
        rec.score = r;
        rec.error_flag = facp_update(st, params_, r, rate_regions_[i], regions_[i]);
      }
    }
    double raw = 0.0;
    for (std::size_t k = 0; k < st.beliefs.size(); ++k) raw += st.beliefs[k] * st.delta_raw[k];
    rec.delta_level = raw;
    rate_regions_[i] = facp_rate_regions(st, params_.r_max);
    regions_[i] = facp_region(st, params_.r_max);
    rec.region = regions_[i];
  }

  past_predictions_.push_front(predictions);
  while (past_predictions_.size() > static_cast<std::size_t>(horizon_))
    past_predictions_.pop_back();
  return records_;
}

}  // namespace acpmpc
