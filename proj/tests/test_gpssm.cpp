#include "lfm/gpssm.hpp"

#include <doctest.h>

#include "test_support.hpp"

using namespace lfm;

TEST_CASE("Matern-3/2 closed form: alpha and q_c") {
  const LatentSdeModel sde = kernel_to_ssm({1.0, 1.0});
  const double alpha = std::sqrt(3.0);
  CHECK(sde.F(0, 1) == 1.0);
  CHECK(sde.F(1, 0) == doctest::Approx(-3.0));
  CHECK(sde.F(1, 1) == doctest::Approx(-2.0 * alpha));
  CHECK(sde.q_c == doctest::Approx(4.0 * std::pow(3.0, 1.5)).epsilon(1e-14));  // 20.7846...
  CHECK(sde.q_c == doctest::Approx(20.784609690826528).epsilon(1e-14));
}

TEST_CASE("stationarity Lyapunov identity") {
  for (double ls : {0.05, 0.3, 2.0}) {
    for (double var : {0.5, 1.0, 4.0}) {
      const LatentSdeModel sde = kernel_to_ssm({ls, var});
      const Eigen::Matrix2d residual = sde.F * sde.P_inf + sde.P_inf * sde.F.transpose() +
                                       sde.L_noise * sde.q_c * sde.L_noise.transpose();
      CHECK(residual.cwiseAbs().maxCoeff() < 1e-10 * sde.P_inf.norm() * sde.q_c);
    }
  }
}

TEST_CASE("variance scaling is linear, F unchanged") {
  const LatentSdeModel a = kernel_to_ssm({0.4, 1.0});
  const LatentSdeModel b = kernel_to_ssm({0.4, 2.0});
  CHECK((b.F - a.F).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b.q_c == doctest::Approx(2.0 * a.q_c));
  CHECK((b.P_inf - 2.0 * a.P_inf).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("discretize: dt -> 0 limit") {
  const DiscreteKernelStep step = discretize(kernel_to_ssm({1.0, 1.0}), 1e-9);
  CHECK((step.A - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(step.Q.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("discretize: stationarity and semigroup") {
  const LatentSdeModel sde = kernel_to_ssm({0.25, 1.5});
  for (double dt : {1e-4, 1e-2, 0.5}) {
    const DiscreteKernelStep step = discretize(sde, dt);
    const Eigen::Matrix2d lhs = step.A * sde.P_inf * step.A.transpose() + step.Q;
    CHECK((lhs - sde.P_inf).cwiseAbs().maxCoeff() < 1e-10);
    const DiscreteKernelStep twice = discretize(sde, 2.0 * dt);
    CHECK((step.A * step.A - twice.A).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sampling: variance, autocorrelation, determinism") {
  const KernelParams kernel{0.5, 1.3};
  const LatentSdeModel sde = kernel_to_ssm(kernel);
  const double dt = 0.05;

  // 10000 independent one-point draws measure the stationary variance
  double acc = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::vector<double> v = sample_gp(sde, dt, 1, 1000 + static_cast<std::uint64_t>(i));
    acc += v[0] * v[0];
  }
  CHECK(acc / 10000.0 == doctest::Approx(kernel.variance).epsilon(0.05));

  // autocorrelation at lag = lengthscale vs the closed-form kernel
  const int lag = 10;  // 10 * 0.05 = 0.5 = lengthscale
  const std::size_t n = 200000;
  const std::vector<double> path = sample_gp(sde, dt, n, 99);
  double c0 = 0.0, cl = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) {
    c0 += path[i] * path[i];
    cl += path[i] * path[i + lag];
  }
  const double expected = (1.0 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0));  // 0.4834
  CHECK(std::abs(cl / c0 - expected) < 0.05);

  CHECK(sample_gp(sde, dt, 64, 7) == sample_gp(sde, dt, 64, 7));
  CHECK(sample_gp(sde, dt, 64, 7) != sample_gp(sde, dt, 64, 8));
}

TEST_CASE("state-space filtering equals batch Matern GP regression") {
  // Oracle: dense kernel-matrix posterior mean on the same grid.
  const KernelParams kernel{0.5, 1.0};
  const LatentSdeModel sde = kernel_to_ssm(kernel);
  const double dt = 0.05;
  const int n = 200;
  const double sigma2 = 0.04;

  const std::vector<double> truth = sample_gp(sde, dt, n, 4321);
  Rng rng(555);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = truth[static_cast<std::size_t>(i)] + std::sqrt(sigma2) * rng.gaussian();

  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = matern32_covariance(kernel, (i - j) * dt);
  Eigen::MatrixXd gram_noise = gram;
  gram_noise.diagonal().array() += sigma2;
  const Eigen::VectorXd batch_mean = gram * gram_noise.ldlt().solve(y);

  // scalar Kalman filter + RTS smoother over (A, Q, H_gp), written here
  // against the textbook equations
  const DiscreteKernelStep step = discretize(sde, dt);
  lfmtest::LinearModel model{step.A, step.Q, sde.H_gp, sigma2};
  lfm::GaussianState init;
  init.mean = Eigen::Vector2d::Zero();
  init.cov = sde.P_inf;
  const lfmtest::KfOracleResult kf =
      lfmtest::exact_kalman_filter(model, y.transpose(), init, std::vector<bool>(n, false));
  const std::vector<lfm::GaussianState> smoothed = lfmtest::exact_rts_smoother(model, kf);

  double rms = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = smoothed[static_cast<std::size_t>(i)].mean[0] - batch_mean[i];
    rms += d * d;
  }
  rms = std::sqrt(rms / n);
  CHECK(rms < 1e-6);
}

TEST_CASE("covariances stay symmetric") {
  const DiscreteKernelStep step = discretize(kernel_to_ssm({0.1, 2.0}), 0.01);
  CHECK((step.Q - step.Q.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}
