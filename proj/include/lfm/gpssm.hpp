#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace lfm {

/// Matern-3/2 GP hyperparameters.
struct KernelParams {
  double lengthscale = 0.2;  // seconds
  double variance = 1.0;
};

/// Latent state dimension of the Matern-3/2 SDE representation.
inline constexpr int kLatentDim = 2;

/// LTI SDE dx = F x dt + L dW with spectral density q_c whose first state is
/// an exact Matern-3/2 GP.
struct LatentSdeModel {
  Eigen::Matrix2d F;
  Eigen::Vector2d L_noise;
  double q_c = 0.0;
  Eigen::Matrix2d P_inf;
  Eigen::RowVector2d H_gp;
};

struct DiscreteKernelStep {
  Eigen::Matrix2d A;
  Eigen::Matrix2d Q;
};

LatentSdeModel kernel_to_ssm(const KernelParams& kernel);

/// A = expm(F dt); Q = P_inf - A P_inf A^T (exact for stationary LTI SDEs).
DiscreteKernelStep discretize(const LatentSdeModel& sde, double dt);

/// Stationary sample path of the GP on a regular dt grid, deterministic per
/// seed. Returns H_gp applied to the state at each of the n steps.
std::vector<double> sample_gp(const LatentSdeModel& sde, double dt, std::size_t n,
                              std::uint64_t seed);

/// Closed-form Matern-3/2 covariance k(tau); the batch-regression oracle in
/// the tests is built from this.
double matern32_covariance(const KernelParams& kernel, double tau);

}  // namespace lfm
