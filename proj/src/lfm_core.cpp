#include "lfm/lfm_core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lfm {
namespace {

constexpr double kStateJitter = 1e-10;

// sign(x) |x|^gamma: odd extension so transiently negative filter means keep
// a restorative drift.
double signed_pow(double x, double gamma) {
  if (x == 0.0) return 0.0;
  const double mag = std::pow(std::abs(x), gamma);
  return x < 0.0 ? -mag : mag;
}

double apply_nonlinearity(Nonlinearity g, double u) {
  return g == Nonlinearity::kSoftplus ? softplus(u) : u;
}

}  // namespace

StateLayout build_layout(int M, int R, int P, int d) {
  if (M < 1 || R < 1 || P < 0 || d < 1)
    throw std::invalid_argument("build_layout: need M>=1, R>=1, P>=0, d>=1");
  StateLayout layout;
  layout.M = M;
  layout.R = R;
  layout.P = P;
  layout.d = d;
  layout.n = M + R * d + M * P + R * P;
  return layout;
}

double softplus(double u) {
  if (u > 0.0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

void check_conformance(const LfmParams& params, const StateLayout& layout) {
  const auto fail = [](const std::string& what) {
    throw std::invalid_argument("LfmParams/StateLayout mismatch: " + what);
  };
  if (params.channels() != layout.M) fail("damping size != M");
  if (params.gamma.size() != layout.M) fail("gamma size != M");
  if (params.feedback.rows() != layout.M || params.feedback.cols() != layout.P)
    fail("feedback must be M x P");
  if (params.forces() != layout.R) fail("kernel count != R");
  if (static_cast<int>(params.sensitivity.size()) != layout.R) fail("sensitivity blocks != R");
  for (const auto& s : params.sensitivity)
    if (s.rows() != layout.M || s.cols() != layout.P + 1) fail("sensitivity block must be M x (P+1)");
  if (!(params.sigma2 > 0.0)) fail("sigma2 must be > 0");
  if (layout.d != kLatentDim) fail("latent dimension must match the Matern-3/2 SDE");
}

LfmTransition::LfmTransition(const LfmParams& params, const StateLayout& layout, double dt)
    : params_(params), layout_(layout), dt_(dt) {
  check_conformance(params, layout);
  if (!(dt > 0.0)) throw std::invalid_argument("LfmTransition: dt must be > 0");
  step_a_.reserve(static_cast<std::size_t>(layout.R));
  process_noise_ = Eigen::MatrixXd::Zero(layout.n, layout.n);
  for (int r = 0; r < layout.R; ++r) {
    const DiscreteKernelStep step = discretize(kernel_to_ssm(params.kernels[static_cast<std::size_t>(r)]), dt);
    step_a_.push_back(step.A);
    process_noise_.block<2, 2>(layout.latent(r, 0), layout.latent(r, 0)) = step.Q;
  }
  for (int m = 0; m < layout.M; ++m) process_noise_(m, m) += kStateJitter;
}

Eigen::VectorXd LfmTransition::operator()(const Eigen::VectorXd& state) const {
  const StateLayout& L = layout_;
  if (state.size() != L.n) throw std::invalid_argument("transition: state size != layout.n");
  Eigen::VectorXd next(L.n);

  // current latent values u_r[t_k] through H_gp = [1, 0]
  const auto latent_value = [&](int r, int q) {
    return q == 0 ? state[L.latent_value(r)] : state[L.latent_history(q, r)];
  };

  for (int m = 0; m < L.M; ++m) {
    const double x = state[L.output(m)];
    double drift = -params_.damping[m] * signed_pow(x, params_.gamma[m]);
    for (int p = 1; p <= L.P; ++p)
      drift += params_.feedback(m, p - 1) * state[L.output_history(p, m)];
    for (int r = 0; r < L.R; ++r) {
      const Eigen::MatrixXd& s = params_.sensitivity[static_cast<std::size_t>(r)];
      for (int q = 0; q <= L.P; ++q) {
        const double coeff = s(m, q);
        if (coeff != 0.0)
          drift += coeff * apply_nonlinearity(params_.nonlinearity, latent_value(r, q));
      }
    }
    next[L.output(m)] = x + dt_ * drift;
  }

  for (int r = 0; r < L.R; ++r)
    next.segment<2>(L.latent(r, 0)) =
        step_a_[static_cast<std::size_t>(r)] * state.segment<2>(L.latent(r, 0));

  // copy-down: slot 1 receives the previous current values, slot p receives
  // previous slot p-1
  for (int p = L.P; p >= 2; --p) {
    for (int m = 0; m < L.M; ++m)
      next[L.output_history(p, m)] = state[L.output_history(p - 1, m)];
    for (int r = 0; r < L.R; ++r)
      next[L.latent_history(p, r)] = state[L.latent_history(p - 1, r)];
  }
  if (L.P >= 1) {
    for (int m = 0; m < L.M; ++m) next[L.output_history(1, m)] = state[L.output(m)];
    for (int r = 0; r < L.R; ++r) next[L.latent_history(1, r)] = state[L.latent_value(r)];
  }
  return next;
}

Eigen::VectorXd transition(const Eigen::VectorXd& state, const LfmParams& params,
                           const StateLayout& layout, double dt) {
  return LfmTransition(params, layout, dt)(state);
}

Eigen::MatrixXd process_noise(const LfmParams& params, const StateLayout& layout, double dt) {
  return LfmTransition(params, layout, dt).process_noise();
}

Eigen::VectorXd measure(const Eigen::VectorXd& state_mean, const StateLayout& layout) {
  if (state_mean.size() != layout.n)
    throw std::invalid_argument("measure: state size != layout.n");
  return state_mean.head(layout.M);
}

GaussianState initial_state(const Eigen::VectorXd& first_frame, const LfmParams& params,
                            const StateLayout& layout) {
  check_conformance(params, layout);
  if (first_frame.size() != layout.M)
    throw std::invalid_argument("initial_state: frame size != M");
  GaussianState s;
  s.mean = Eigen::VectorXd::Zero(layout.n);
  s.mean.head(layout.M) = first_frame;
  for (int p = 1; p <= layout.P; ++p)
    for (int m = 0; m < layout.M; ++m) s.mean[layout.output_history(p, m)] = first_frame[m];
  // latent block and its history start at the prior mean 0

  s.cov = Eigen::MatrixXd::Identity(layout.n, layout.n) * kStateJitter;
  for (int r = 0; r < layout.R; ++r) {
    const LatentSdeModel sde = kernel_to_ssm(params.kernels[static_cast<std::size_t>(r)]);
    s.cov.block<2, 2>(layout.latent(r, 0), layout.latent(r, 0)) = sde.P_inf;
  }
  return s;
}

}  // namespace lfm
