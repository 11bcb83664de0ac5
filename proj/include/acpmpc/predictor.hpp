#pragma once

// Sliding linear predictor on delay embeddings.
//
// Rank is chosen on a Page matrix with the unknown-noise optimal hard
// threshold; the one-step shift operator is fitted on a rank-truncated
// Hankel matrix of the most recent 2L samples through its pseudoinverse.
// An EKF over the embedding refines the latest state and supplies the
// Gaussian-region baseline.

#include <algorithm>
#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace acpmpc {

struct DelayEmbedding {
  Eigen::VectorXd values;  // oldest -> newest
  int length() const { return static_cast<int>(values.size()); }
};

// H(r, c) = series[r + c]; L rows, n - L + 1 columns.
Eigen::MatrixXd build_hankel(std::span<const double> series, int L);

// P(r, c) = series[c * L + r]; trailing partial block dropped.
Eigen::MatrixXd build_page(std::span<const double> series, int L);

struct HsvtResult {
  int rank = 0;
  double threshold = 0.0;
  Eigen::VectorXd singular_values;
};

// omega(beta) ~ 0.56 b^3 - 0.95 b^2 + 1.82 b + 1.43
double hsvt_omega(double beta);

// Singular values below this fraction of the largest are numerical zeros.
inline constexpr double kRelativeRankFloor = 1e-10;

HsvtResult opt_hsvt(const Eigen::MatrixXd& page);

// lambda(beta) sqrt(n) sigma for an m x n matrix (m <= n) with noise level sigma.
double hsvt_lambda(double beta);
HsvtResult opt_hsvt_known_noise(const Eigen::MatrixXd& page, double sigma);

struct PredictorModel {
  Eigen::MatrixXd shift;  // Lambda, L x L
  int rank = 0;
  Eigen::VectorXd singular_values;  // of the Page matrix, nonincreasing
  double threshold = 0.0;
  bool low_rank = false;              // rank 0: the model predicts zeros
  Eigen::VectorXd denoised_latest;    // last column of the truncated Hankel

  int embedding_length() const { return static_cast<int>(shift.rows()); }
};

// Needs at least 2L samples; the Page matrix uses the whole series and the
// Hankel fit uses the last 2L samples.
// sigma >= 0 selects the known-noise threshold (sigma = 0 keeps every
// numerically nonzero direction); a negative sigma selects the median rule.
PredictorModel fit_linear_predictor(std::span<const double> series, int L, double sigma = -1.0);

// yhat^tau = last entry of Lambda^tau g for tau = 1..H.
std::vector<double> predict_h_steps(const PredictorModel& model, const DelayEmbedding& latest,
                                    int H, bool iterative_tail = false);

struct EkfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd process_noise;
  double measurement_noise = 1e-4;
};

EkfState ekf_init(const DelayEmbedding& latest, double process_noise_scale,
                  double measurement_noise);

// Throws std::invalid_argument when the covariance is not symmetric PSD.
void check_psd(const Eigen::MatrixXd& cov, double tol = 1e-9);

// Predict with Lambda as the Jacobian, then update on the newest entry.
EkfState ekf_step(const EkfState& ekf, const PredictorModel& model, double y);

// Variance of the tau-step forecast of the newest entry.
double ekf_forecast_variance(const EkfState& ekf, const PredictorModel& model, int tau);

double chi_square_quantile(int dof, double p);

// Radius of the smallest origin-centred ball containing the (1 - delta)
// chi-square ellipsoid of `cov`.
double gaussian_ball_radius(const Eigen::MatrixXd& cov, double delta);

// Per-coordinate EKFs treated as independent; position covariance is diagonal.
double ekf_gaussian_region(std::span<const EkfState> coords,
                           std::span<const PredictorModel> models, int tau, double delta);

struct PredictorConfig {
  int embedding_length = 10;  // L
  int page_columns = 6;       // Page matrix uses the last L * page_columns samples
  int horizon = 10;           // H
  double process_noise = 1e-4;
  double measurement_noise = -1.0;  // negative: sigma_obs^2
  bool use_ekf = true;
  bool iterative_tail = false;
  // With few Page columns the median rule collapses to rank 1; the
  // known-noise rule uses sqrt(measurement_noise) instead.
  bool known_noise_rank = true;

  void validate() const;
  int min_history() const { return 2 * embedding_length; }
  int max_history() const { return embedding_length * std::max(page_columns, 2); }
};

// One independent predictor per observed coordinate.
class SlidingPredictor {
 public:
  SlidingPredictor(PredictorConfig config, int dimension, double sigma_obs);

  // Feeds y_t; returns yhat_t^1..H (empty until enough history exists).
  std::vector<Eigen::VectorXd> observe(const Eigen::Ref<const Eigen::VectorXd>& y);

  bool ready() const { return ready_; }
  double gaussian_radius(int tau, double delta) const;

  const std::vector<PredictorModel>& models() const { return models_; }
  const std::vector<EkfState>& filters() const { return filters_; }
  const PredictorConfig& config() const { return config_; }

 private:
  PredictorConfig config_;
  int dimension_;
  double measurement_noise_;
  std::vector<std::deque<double>> history_;
  std::vector<PredictorModel> models_;
  std::vector<EkfState> filters_;
  bool ready_ = false;
};

}  // namespace acpmpc
