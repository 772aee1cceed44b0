#pragma once

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lfm/audio_io.hpp"
#include "lfm/lfm_core.hpp"

namespace lfm {

/// Thrown when a covariance stops being PSD beyond the jitter ladder.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& what)
      : std::runtime_error("filter diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct CubaturePoints {
  Eigen::MatrixXd points;   // n x 2n unit points, column i
  Eigen::VectorXd weights;  // 2n, all 1/(2n)
};

/// Third-degree spherical cubature rule: points +-sqrt(n) e_i, equal weights.
/// Callers transform by mean + sqrt(cov) * point.
CubaturePoints cubature_points(int n);

/// Generic additive-noise state-space model with a deterministic transition
/// and a linear measurement. The LFM entry points below wrap this; tests
/// also drive it directly with hand-built linear models.
struct StateSpaceModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> transition;
  Eigen::MatrixXd process_noise;  // n x n
  Eigen::MatrixXd measurement;    // obs_dim x n
  double sigma2 = 0.0;            // measurement noise variance (iid)
};

struct FilterResult {
  std::vector<GaussianState> filtered;
  std::vector<GaussianState> predicted;
  double loglik = 0.0;
  std::vector<Eigen::VectorXd> innovation_means;
  std::vector<Eigen::MatrixXd> innovation_covs;
  std::vector<bool> skip_mask;
  double dt = 0.0;  // frame period, kept for the smoother
};

struct SmoothResult {
  std::vector<GaussianState> smoothed;
};

FilterResult ckf_filter(const StateSpaceModel& model, const Eigen::MatrixXd& observations,
                        const GaussianState& init, const std::vector<bool>& skip_mask,
                        bool store_states = true);

SmoothResult rts_smooth(const StateSpaceModel& model, const FilterResult& fr);

/// Cubature Kalman filter over envelope frames. Prediction propagates
/// cubature points through the LFM transition; the update is the exact
/// linear Kalman update (the measurement is a selector).
FilterResult ckf_filter(const EnvelopeMatrix& observations, const LfmParams& params,
                        const StateLayout& layout, const std::vector<bool>& skip_mask);

/// Backward cubature RTS pass; cross-covariances are recomputed from the
/// stored filtered states with the same cubature points the forward
/// prediction used.
SmoothResult rts_smooth(const FilterResult& fr, const LfmParams& params,
                        const StateLayout& layout);

double marginal_loglik(const EnvelopeMatrix& observations, const LfmParams& params,
                       const StateLayout& layout, const std::vector<bool>& skip_mask);

struct LoglikEval {
  double value = 0.0;
  bool diverged = false;
  int step = -1;
};

/// Like marginal_loglik but maps divergence to -inf with a flag instead of
/// throwing; skips state storage, so it is the cheap path for optimizers.
LoglikEval try_marginal_loglik(const EnvelopeMatrix& observations, const LfmParams& params,
                               const StateLayout& layout, const std::vector<bool>& skip_mask);

/// Smoothed latent posterior means, one row per force.
Eigen::MatrixXd latent_means(const SmoothResult& sr, const StateLayout& layout);

}  // namespace lfm
