#pragma once

#include <Eigen/Core>
#include <vector>

#include "lfm/audio_io.hpp"
#include "lfm/gpssm.hpp"

namespace lfm {

enum class Nonlinearity {
  kSoftplus,  // g(u) = log(1 + e^u)
  kIdentity,  // test hook: makes the transition affine-linear
};

/// Everything the envelope ODE and its latent GPs are parameterized by.
/// Entries of `feedback` / `sensitivity` outside the active index sets are
/// exactly zero and never enter optimization.
struct LfmParams {
  Eigen::VectorXd damping;                    // D, size M, >= 0 (1/s)
  Eigen::VectorXd gamma;                      // size M, in [0.5, 1]
  Eigen::MatrixXd feedback;                   // B, M x P, column p-1 holds lag p
  std::vector<Eigen::MatrixXd> sensitivity;   // S, one M x (P+1) block per force
  std::vector<KernelParams> kernels;          // size R
  double sigma2 = 1e-2;                       // measurement noise variance
  std::vector<int> active_feedback;           // lag indices p in 1..P with B free
  std::vector<int> active_lags;               // lag indices q in 0..P with S free
  Nonlinearity nonlinearity = Nonlinearity::kSoftplus;

  int channels() const { return static_cast<int>(damping.size()); }
  int forces() const { return static_cast<int>(kernels.size()); }
  int history() const { return static_cast<int>(feedback.cols()); }
};

/// Index map of the augmented state vector:
/// [ outputs (M) | latent SDE states (R*d) | output history (M*P) | latent
///   value history (R*P) ].
struct StateLayout {
  int M = 0, R = 0, P = 0, d = 0;
  int n = 0;

  int output(int m) const { return m; }
  int latent(int r, int j) const { return M + r * d + j; }
  int latent_value(int r) const { return latent(r, 0); }
  int output_history(int p, int m) const { return M + R * d + (p - 1) * M + m; }  // p in 1..P
  int latent_history(int q, int r) const { return M + R * d + M * P + (q - 1) * R + r; }
};

StateLayout build_layout(int M, int R, int P, int d);

/// Gaussian filtering/smoothing distribution at one step.
struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Numerically stable softplus log(1 + e^u).
double softplus(double u);

/// Throws if params dimensions do not match the layout.
void check_conformance(const LfmParams& params, const StateLayout& layout);

/// Deterministic transition with per-force discrete kernels precomputed; use
/// this when stepping many times with the same (params, layout, dt).
class LfmTransition {
 public:
  LfmTransition(const LfmParams& params, const StateLayout& layout, double dt);

  Eigen::VectorXd operator()(const Eigen::VectorXd& state) const;
  const Eigen::MatrixXd& process_noise() const { return process_noise_; }
  double dt() const { return dt_; }

 private:
  const LfmParams& params_;
  const StateLayout& layout_;
  double dt_;
  std::vector<Eigen::Matrix2d> step_a_;
  Eigen::MatrixXd process_noise_;
};

/// One Euler step of the augmented model: outputs advance by dt times the
/// envelope ODE drift, the latent SDE block advances by its deterministic
/// transition, and history slots copy down.
Eigen::VectorXd transition(const Eigen::VectorXd& state, const LfmParams& params,
                           const StateLayout& layout, double dt);

/// Block-diagonal process noise: per-force discrete Q on the latent block,
/// 1e-10 jitter on the output block, zeros on the history copies.
Eigen::MatrixXd process_noise(const LfmParams& params, const StateLayout& layout, double dt);

/// H x: the output block (H is a 0/1 selector).
Eigen::VectorXd measure(const Eigen::VectorXd& state_mean, const StateLayout& layout);

/// Filter starting point: outputs at the first observed frame, latent states
/// at their stationary prior, history slots replicated with jitter variance.
GaussianState initial_state(const Eigen::VectorXd& first_frame, const LfmParams& params,
                            const StateLayout& layout);

}  // namespace lfm
