#include "lfm/gpssm.hpp"

#include <cmath>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>

#include "lfm/numerics.hpp"

namespace lfm {

LatentSdeModel kernel_to_ssm(const KernelParams& kernel) {
  if (!(kernel.lengthscale > 0.0) || !(kernel.variance > 0.0))
    throw std::invalid_argument("kernel_to_ssm: lengthscale and variance must be > 0");
  const double alpha = std::sqrt(3.0) / kernel.lengthscale;
  LatentSdeModel sde;
  sde.F << 0.0, 1.0, -alpha * alpha, -2.0 * alpha;
  sde.L_noise << 0.0, 1.0;
  sde.q_c = 4.0 * alpha * alpha * alpha * kernel.variance;
  sde.P_inf = Eigen::Vector2d(kernel.variance, alpha * alpha * kernel.variance).asDiagonal();
  sde.H_gp << 1.0, 0.0;
  return sde;
}

DiscreteKernelStep discretize(const LatentSdeModel& sde, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be > 0");
  DiscreteKernelStep step;
  step.A = (sde.F * dt).exp();
  Eigen::Matrix2d q = sde.P_inf - step.A * sde.P_inf * step.A.transpose();
  step.Q = 0.5 * (q + q.transpose());
  return step;
}

std::vector<double> sample_gp(const LatentSdeModel& sde, double dt, std::size_t n,
                              std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_gp: n >= 1");
  const DiscreteKernelStep step = discretize(sde, dt);
  const Eigen::Matrix2d sqrt_pinf = psd_sqrt(sde.P_inf).root;
  const Eigen::Matrix2d sqrt_q = psd_sqrt(step.Q).root;

  Rng rng(seed);
  auto normal2 = [&rng] { return Eigen::Vector2d(rng.gaussian(), rng.gaussian()); };

  Eigen::Vector2d state = sqrt_pinf * normal2();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = sde.H_gp * state;
    if (k + 1 < n) state = step.A * state + sqrt_q * normal2();
  }
  return out;
}

double matern32_covariance(const KernelParams& kernel, double tau) {
  const double a = std::sqrt(3.0) * std::abs(tau) / kernel.lengthscale;
  return kernel.variance * (1.0 + a) * std::exp(-a);
}

}  // namespace lfm
