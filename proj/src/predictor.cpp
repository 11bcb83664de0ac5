#include "acpmpc/predictor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

namespace acpmpc {

Eigen::MatrixXd build_hankel(std::span<const double> series, int L) {
  if (L < 1) throw std::invalid_argument("build_hankel: L must be >= 1");
  const auto n = static_cast<int>(series.size());
  if (n < L)
    throw std::invalid_argument("build_hankel: series of length " + std::to_string(n) +
                                " shorter than L=" + std::to_string(L));
  const int cols = n - L + 1;
  Eigen::MatrixXd H(L, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < L; ++r) H(r, c) = series[r + c];
  return H;
}

Eigen::MatrixXd build_page(std::span<const double> series, int L) {
  if (L < 1) throw std::invalid_argument("build_page: L must be >= 1");
  const auto n = static_cast<int>(series.size());
  if (n < L)
    throw std::invalid_argument("build_page: series of length " + std::to_string(n) +
                                " shorter than L=" + std::to_string(L));
  const int cols = n / L;
  Eigen::MatrixXd P(L, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < L; ++r) P(r, c) = series[c * L + r];
  return P;
}

double hsvt_omega(double beta) {
  return 0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
}

namespace {

int count_rank(const Eigen::VectorXd& sv, double threshold) {
  int rank = 0;
  const double floor = sv.size() ? kRelativeRankFloor * sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 0.0 && sv(i) >= threshold && sv(i) > floor) ++rank;
  return rank;
}

}  // namespace

double hsvt_lambda(double beta) {
  return std::sqrt(2.0 * (beta + 1.0) +
                   8.0 * beta / ((beta + 1.0) + std::sqrt(beta * beta + 14.0 * beta + 1.0)));
}

HsvtResult opt_hsvt_known_noise(const Eigen::MatrixXd& page, double sigma) {
  if (page.size() == 0) throw std::invalid_argument("opt_hsvt: empty matrix");
  if (!(sigma >= 0.0)) throw std::invalid_argument("opt_hsvt: noise level must be >= 0");
  HsvtResult out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(page);
  out.singular_values = svd.singularValues();
  const double m = static_cast<double>(std::min(page.rows(), page.cols()));
  const double n = static_cast<double>(std::max(page.rows(), page.cols()));
  out.threshold = hsvt_lambda(m / n) * std::sqrt(n) * sigma;
  out.rank = count_rank(out.singular_values, out.threshold);
  return out;
}

HsvtResult opt_hsvt(const Eigen::MatrixXd& page) {
  if (page.size() == 0) throw std::invalid_argument("opt_hsvt: empty matrix");
  HsvtResult out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(page);
  out.singular_values = svd.singularValues();
  const Eigen::Index k = out.singular_values.size();
  const double beta = static_cast<double>(std::min(page.rows(), page.cols())) /
                      static_cast<double>(std::max(page.rows(), page.cols()));

  std::vector<double> sv(out.singular_values.data(), out.singular_values.data() + k);
  std::sort(sv.begin(), sv.end());
  const double median = (k % 2 == 1) ? sv[k / 2] : 0.5 * (sv[k / 2 - 1] + sv[k / 2]);
  out.threshold = hsvt_omega(beta) * median;
  out.rank = count_rank(out.singular_values, out.threshold);
  return out;
}

namespace {

// Pseudoinverse keeping at most `max_rank` singular directions.
Eigen::MatrixXd truncated_pinv(const Eigen::MatrixXd& A, int max_rank) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(A.cols(), A.rows());
  if (s.size() == 0 || s(0) <= 0.0) return pinv;
  const double cutoff = kRelativeRankFloor * s(0);
  for (Eigen::Index i = 0; i < s.size() && i < max_rank; ++i) {
    if (s(i) <= cutoff) break;
    pinv += svd.matrixV().col(i) * (svd.matrixU().col(i).transpose() / s(i));
  }
  return pinv;
}

}  // namespace

PredictorModel fit_linear_predictor(std::span<const double> series, int L, double sigma) {
  if (L < 2) throw std::invalid_argument("fit_linear_predictor: L must be >= 2");
  const auto n = static_cast<int>(series.size());
  if (n < 2 * L)
    throw std::invalid_argument("fit_linear_predictor: need at least 2L=" +
                                std::to_string(2 * L) + " samples, got " + std::to_string(n));
  PredictorModel model;
  const Eigen::MatrixXd page = build_page(series, L);
  const HsvtResult hs = sigma >= 0.0 ? opt_hsvt_known_noise(page, sigma) : opt_hsvt(page);
  model.singular_values = hs.singular_values;
  model.threshold = hs.threshold;
  model.rank = std::min(hs.rank, L);

  const Eigen::MatrixXd H = build_hankel(series.subspan(n - 2 * L), L);  // L x (L + 1)
  model.shift = Eigen::MatrixXd::Zero(L, L);
  model.denoised_latest = Eigen::VectorXd::Zero(L);
  if (model.rank == 0) {
    model.low_rank = true;
    return model;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int r = std::min<int>(model.rank, static_cast<int>(svd.singularValues().size()));
  const Eigen::MatrixXd Hhat = svd.matrixU().leftCols(r) *
                               svd.singularValues().head(r).asDiagonal() *
                               svd.matrixV().leftCols(r).transpose();
  const Eigen::MatrixXd past = Hhat.leftCols(L);
  const Eigen::MatrixXd next = Hhat.rightCols(L);
  model.shift = next * truncated_pinv(past, r);
  model.denoised_latest = Hhat.col(L);
  return model;
}

std::vector<double> predict_h_steps(const PredictorModel& model, const DelayEmbedding& latest,
                                    int H, bool iterative_tail) {
  const int L = model.embedding_length();
  if (H < 1) throw std::invalid_argument("predict_h_steps: H must be >= 1");
  if (H > L && !iterative_tail)
    throw std::invalid_argument("predict_h_steps: H=" + std::to_string(H) +
                                " exceeds L=" + std::to_string(L));
  if (latest.length() != L)
    throw std::invalid_argument("predict_h_steps: embedding length mismatch");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(H));
  Eigen::VectorXd g = latest.values;
  for (int tau = 1; tau <= H; ++tau) {
    g = model.shift * g;
    out.push_back(g(L - 1));
  }
  return out;
}

EkfState ekf_init(const DelayEmbedding& latest, double process_noise_scale,
                  double measurement_noise) {
  const int L = latest.length();
  EkfState s;
  s.mean = latest.values;
  s.covariance = Eigen::MatrixXd::Identity(L, L) * measurement_noise;
  s.process_noise = Eigen::MatrixXd::Identity(L, L) * process_noise_scale;
  s.measurement_noise = measurement_noise;
  return s;
}

void check_psd(const Eigen::MatrixXd& cov, double tol) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("covariance must be square");
  if (cov.size() == 0) return;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol * scale)
    throw std::invalid_argument("covariance is not positive semidefinite (min eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()) + ")");
}

EkfState ekf_step(const EkfState& ekf, const PredictorModel& model, double y) {
  check_psd(ekf.covariance);
  const int L = model.embedding_length();
  const Eigen::MatrixXd& F = model.shift;
  EkfState out = ekf;
  Eigen::VectorXd m = F * ekf.mean;
  Eigen::MatrixXd P = F * ekf.covariance * F.transpose() + ekf.process_noise;

  const double S = P(L - 1, L - 1) + ekf.measurement_noise;
  if (S > 0.0) {
    const Eigen::VectorXd K = P.col(L - 1) / S;
    m += K * (y - m(L - 1));
    Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(L, L);
    IKH.col(L - 1) -= K;
    P = IKH * P * IKH.transpose() + (K * K.transpose()) * ekf.measurement_noise;
  }
  out.mean = m;
  out.covariance = 0.5 * (P + P.transpose());
  return out;
}

double ekf_forecast_variance(const EkfState& ekf, const PredictorModel& model, int tau) {
  const int L = model.embedding_length();
  Eigen::MatrixXd P = ekf.covariance;
  for (int j = 0; j < tau; ++j)
    P = model.shift * P * model.shift.transpose() + ekf.process_noise;
  return std::max(P(L - 1, L - 1), 0.0);
}

double chi_square_quantile(int dof, double p) {
  if (dof < 1) throw std::invalid_argument("chi_square_quantile: dof must be >= 1");
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, p);
}

double gaussian_ball_radius(const Eigen::MatrixXd& cov, double delta) {
  if (delta >= 1.0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  return std::sqrt(chi_square_quantile(static_cast<int>(cov.rows()), 1.0 - delta) * lmax);
}

double ekf_gaussian_region(std::span<const EkfState> coords,
                           std::span<const PredictorModel> models, int tau, double delta) {
  if (coords.size() != models.size() || coords.empty())
    throw std::invalid_argument("ekf_gaussian_region: filters and models misaligned");
  const auto d = static_cast<Eigen::Index>(coords.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    cov(i, i) = ekf_forecast_variance(coords[i], models[i], tau);
  return gaussian_ball_radius(cov, delta);
}

void PredictorConfig::validate() const {
  if (embedding_length < 2) throw std::invalid_argument("predictor: L must be >= 2");
  if (page_columns < 2) throw std::invalid_argument("predictor: page_columns must be >= 2");
  if (horizon < 1) throw std::invalid_argument("predictor: horizon must be >= 1");
  if (horizon > embedding_length && !iterative_tail)
    throw std::invalid_argument("predictor: horizon exceeds L without iterative_tail");
  if (process_noise < 0.0) throw std::invalid_argument("predictor: process noise must be >= 0");
}

SlidingPredictor::SlidingPredictor(PredictorConfig config, int dimension, double sigma_obs)
    : config_(std::move(config)), dimension_(dimension) {
  config_.validate();
  if (dimension_ < 1) throw std::invalid_argument("predictor dimension must be >= 1");
  measurement_noise_ = config_.measurement_noise >= 0.0 ? config_.measurement_noise
                                                        : sigma_obs * sigma_obs;
  history_.resize(static_cast<std::size_t>(dimension_));
}

std::vector<Eigen::VectorXd> SlidingPredictor::observe(const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != dimension_) throw std::invalid_argument("predictor: observation dimension");
  const int L = config_.embedding_length;
  const auto cap = static_cast<std::size_t>(config_.max_history());
  for (int i = 0; i < dimension_; ++i) {
    auto& h = history_[i];
    h.push_back(y(i));
    while (h.size() > cap) h.pop_front();
  }
  if (history_.front().size() < static_cast<std::size_t>(config_.min_history())) return {};

  const bool first = !ready_;
  models_.resize(static_cast<std::size_t>(dimension_));
  if (first) filters_.resize(static_cast<std::size_t>(dimension_));

  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(config_.horizon),
                                   Eigen::VectorXd::Zero(dimension_));
  for (int i = 0; i < dimension_; ++i) {
    const std::vector<double> series(history_[i].begin(), history_[i].end());
    models_[i] = fit_linear_predictor(
        series, L, config_.known_noise_rank ? std::sqrt(measurement_noise_) : -1.0);
    DelayEmbedding latest;
    latest.values = Eigen::Map<const Eigen::VectorXd>(series.data() + series.size() - L, L);
    if (first)
      filters_[i] = ekf_init(latest, config_.process_noise, measurement_noise_);
    else
      filters_[i] = ekf_step(filters_[i], models_[i], y(i));

    DelayEmbedding start;
    start.values = config_.use_ekf ? filters_[i].mean : models_[i].denoised_latest;
    const std::vector<double> p =
        predict_h_steps(models_[i], start, config_.horizon, config_.iterative_tail);
    for (int tau = 0; tau < config_.horizon; ++tau) out[tau](i) = p[tau];
  }
  ready_ = true;
  return out;
}

double SlidingPredictor::gaussian_radius(int tau, double delta) const {
  if (!ready_) return std::numeric_limits<double>::infinity();
  return ekf_gaussian_region(filters_, models_, tau, delta);
}

}  // namespace acpmpc
