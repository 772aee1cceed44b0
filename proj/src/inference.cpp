#include "lfm/inference.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "lfm/numerics.hpp"

namespace lfm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Negative-eigenvalue tolerance ladder: round-off up to 1e-6 (relative to the
// largest eigenvalue) is clamped; anything worse is divergence.
constexpr double kNegEigTolerance = 1e-6;

Eigen::MatrixXd state_sqrt_or_throw(const Eigen::MatrixXd& cov, int step) {
  if (!cov.allFinite()) throw DivergenceError(step, "non-finite covariance");
  const PsdSqrt s = psd_sqrt(symmetrized(cov));
  if (s.min_eig < -kNegEigTolerance * std::max(1.0, s.max_eig))
    throw DivergenceError(step, "covariance not PSD (min eig " + std::to_string(s.min_eig) + ")");
  return s.root;
}

struct Prediction {
  GaussianState state;
  Eigen::MatrixXd cross;  // Cov(x_k, x_{k+1}) from the same cubature points
};

Prediction predict(const StateSpaceModel& model, const GaussianState& from, int step,
                   bool want_cross) {
  const int n = static_cast<int>(from.mean.size());
  const Eigen::MatrixXd root = state_sqrt_or_throw(from.cov, step);
  const double scale = std::sqrt(static_cast<double>(n));
  const double weight = 1.0 / (2.0 * n);

  Eigen::MatrixXd propagated(n, 2 * n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd offset = scale * root.col(i);
    propagated.col(2 * i) = model.transition(from.mean + offset);
    propagated.col(2 * i + 1) = model.transition(from.mean - offset);
  }

  Prediction out;
  out.state.mean = propagated.rowwise().mean();
  Eigen::MatrixXd centered = propagated.colwise() - out.state.mean;
  out.state.cov = symmetrized(weight * (centered * centered.transpose()) + model.process_noise);
  if (want_cross) {
    Eigen::MatrixXd centered_in(n, 2 * n);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd offset = scale * root.col(i);
      centered_in.col(2 * i) = offset;
      centered_in.col(2 * i + 1) = -offset;
    }
    out.cross = weight * (centered_in * centered.transpose());
  }
  return out;
}

struct Update {
  GaussianState state;
  double loglik = 0.0;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_cov;
};

Update kalman_update(const StateSpaceModel& model, const GaussianState& prior,
                     const Eigen::VectorXd& y, int step) {
  const int obs_dim = static_cast<int>(model.measurement.rows());
  Update out;
  const Eigen::VectorXd predicted_obs = model.measurement * prior.mean;
  const Eigen::MatrixXd pxy = prior.cov * model.measurement.transpose();
  Eigen::MatrixXd s = model.measurement * pxy;
  s.diagonal().array() += model.sigma2;
  s = symmetrized(s);

  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw DivergenceError(step, "innovation covariance not positive definite");

  out.innovation = y - predicted_obs;
  out.innovation_cov = s;
  const Eigen::VectorXd alpha = llt.solve(out.innovation);
  double logdet = 0.0;
  for (int i = 0; i < obs_dim; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  out.loglik = -0.5 * (obs_dim * kLog2Pi + logdet + out.innovation.dot(alpha));

  const Eigen::MatrixXd gain = llt.solve(pxy.transpose()).transpose();
  out.state.mean = prior.mean + gain * out.innovation;
  // Joseph form keeps the covariance PSD
  const Eigen::MatrixXd imkh =
      Eigen::MatrixXd::Identity(prior.mean.size(), prior.mean.size()) -
      gain * model.measurement;
  out.state.cov = symmetrized(imkh * prior.cov * imkh.transpose() +
                              model.sigma2 * gain * gain.transpose());
  return out;
}

StateSpaceModel lfm_model(const LfmTransition& tr, const LfmParams& params,
                          const StateLayout& layout) {
  StateSpaceModel model;
  model.transition = std::cref(tr);
  model.process_noise = tr.process_noise();
  model.measurement = Eigen::MatrixXd::Zero(layout.M, layout.n);
  model.measurement.leftCols(layout.M).setIdentity();
  model.sigma2 = params.sigma2;
  return model;
}

}  // namespace

CubaturePoints cubature_points(int n) {
  if (n < 1) throw std::invalid_argument("cubature_points: n >= 1");
  CubaturePoints out;
  out.points = Eigen::MatrixXd::Zero(n, 2 * n);
  const double scale = std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    out.points(i, i) = scale;
    out.points(i, n + i) = -scale;
  }
  out.weights = Eigen::VectorXd::Constant(2 * n, 1.0 / (2.0 * n));
  return out;
}

FilterResult ckf_filter(const StateSpaceModel& model, const Eigen::MatrixXd& observations,
                        const GaussianState& init, const std::vector<bool>& skip_mask,
                        bool store_states) {
  const int steps = static_cast<int>(observations.cols());
  if (static_cast<int>(skip_mask.size()) != steps)
    throw std::invalid_argument("ckf_filter: skip_mask length != frame count");
  if (observations.rows() != model.measurement.rows())
    throw std::invalid_argument("ckf_filter: observation rows != measurement rows");

  FilterResult fr;
  fr.skip_mask = skip_mask;
  if (store_states) {
    fr.filtered.reserve(static_cast<std::size_t>(steps));
    fr.predicted.reserve(static_cast<std::size_t>(steps));
    fr.innovation_means.reserve(static_cast<std::size_t>(steps));
    fr.innovation_covs.reserve(static_cast<std::size_t>(steps));
  }

  GaussianState state = init;
  for (int k = 0; k < steps; ++k) {
    if (k > 0) state = predict(model, state, k, /*want_cross=*/false).state;
    if (store_states) fr.predicted.push_back(state);

    if (skip_mask[static_cast<std::size_t>(k)]) {
      // low-amplitude frame: prediction stands in for the update
      if (store_states) {
        fr.filtered.push_back(state);
        fr.innovation_means.push_back(Eigen::VectorXd::Zero(observations.rows()));
        Eigen::MatrixXd s = model.measurement * state.cov * model.measurement.transpose();
        s.diagonal().array() += model.sigma2;
        fr.innovation_covs.push_back(symmetrized(s));
      }
      continue;
    }

    Update up = kalman_update(model, state, observations.col(k), k);
    fr.loglik += up.loglik;
    state = std::move(up.state);
    if (store_states) {
      fr.filtered.push_back(state);
      fr.innovation_means.push_back(std::move(up.innovation));
      fr.innovation_covs.push_back(std::move(up.innovation_cov));
    }
  }
  return fr;
}

SmoothResult rts_smooth(const StateSpaceModel& model, const FilterResult& fr) {
  const int steps = static_cast<int>(fr.filtered.size());
  SmoothResult sr;
  if (steps == 0) return sr;
  sr.smoothed.resize(static_cast<std::size_t>(steps));
  sr.smoothed[static_cast<std::size_t>(steps - 1)] = fr.filtered[static_cast<std::size_t>(steps - 1)];

  for (int k = steps - 2; k >= 0; --k) {
    const GaussianState& f = fr.filtered[static_cast<std::size_t>(k)];
    // same points as the forward prediction: same covariance, same root
    Prediction pred = predict(model, f, k, /*want_cross=*/true);
    const GaussianState& next_s = sr.smoothed[static_cast<std::size_t>(k + 1)];

    Eigen::MatrixXd pp = symmetrized(pred.state.cov);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(pp);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      pp.diagonal().array() += 1e-10;
      ldlt.compute(pp);
      if (ldlt.info() != Eigen::Success)
        throw DivergenceError(k, "singular predicted covariance in smoother");
    }
    const Eigen::MatrixXd gain = ldlt.solve(pred.cross.transpose()).transpose();

    GaussianState& out = sr.smoothed[static_cast<std::size_t>(k)];
    out.mean = f.mean + gain * (next_s.mean - pred.state.mean);
    out.cov = symmetrized(f.cov + gain * (next_s.cov - pred.state.cov) * gain.transpose());
  }
  return sr;
}

FilterResult ckf_filter(const EnvelopeMatrix& observations, const LfmParams& params,
                        const StateLayout& layout, const std::vector<bool>& skip_mask) {
  if (observations.channels() != layout.M)
    throw std::invalid_argument("ckf_filter: observation rows != layout.M");
  if (!(observations.frame_rate > 0.0))
    throw std::invalid_argument("ckf_filter: frame_rate must be > 0");
  const double dt = 1.0 / observations.frame_rate;
  const LfmTransition tr(params, layout, dt);
  const StateSpaceModel model = lfm_model(tr, params, layout);
  const GaussianState init = initial_state(observations.values.col(0), params, layout);
  FilterResult fr = ckf_filter(model, observations.values, init, skip_mask, true);
  fr.dt = dt;
  return fr;
}

SmoothResult rts_smooth(const FilterResult& fr, const LfmParams& params,
                        const StateLayout& layout) {
  if (!(fr.dt > 0.0))
    throw std::invalid_argument("rts_smooth: FilterResult carries no frame period");
  const LfmTransition tr(params, layout, fr.dt);
  return rts_smooth(lfm_model(tr, params, layout), fr);
}

double marginal_loglik(const EnvelopeMatrix& observations, const LfmParams& params,
                       const StateLayout& layout, const std::vector<bool>& skip_mask) {
  const double dt = 1.0 / observations.frame_rate;
  const LfmTransition tr(params, layout, dt);
  const StateSpaceModel model = lfm_model(tr, params, layout);
  const GaussianState init = initial_state(observations.values.col(0), params, layout);
  return ckf_filter(model, observations.values, init, skip_mask, false).loglik;
}

LoglikEval try_marginal_loglik(const EnvelopeMatrix& observations, const LfmParams& params,
                               const StateLayout& layout, const std::vector<bool>& skip_mask) {
  LoglikEval out;
  try {
    out.value = marginal_loglik(observations, params, layout, skip_mask);
    if (!std::isfinite(out.value)) {
      out.diverged = true;
      out.value = -std::numeric_limits<double>::infinity();
    }
  } catch (const DivergenceError& e) {
    out.value = -std::numeric_limits<double>::infinity();
    out.diverged = true;
    out.step = e.step();
  }
  return out;
}

Eigen::MatrixXd latent_means(const SmoothResult& sr, const StateLayout& layout) {
  const int steps = static_cast<int>(sr.smoothed.size());
  Eigen::MatrixXd out(layout.R, steps);
  for (int k = 0; k < steps; ++k)
    for (int r = 0; r < layout.R; ++r)
      out(r, k) = sr.smoothed[static_cast<std::size_t>(k)].mean[layout.latent_value(r)];
  return out;
}

}  // namespace lfm
