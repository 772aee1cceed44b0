#include "lfm/training.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "lfm/inference.hpp"

namespace lfm {
namespace detail {

std::vector<int> clamp_index_set(const std::vector<int>& set, int lo, int hi) {
  std::set<int> kept;
  for (int v : set)
    if (v >= lo && v <= hi) kept.insert(v);
  return {kept.begin(), kept.end()};
}

double pack_positive(double x) { return std::log(std::max(x, 1e-300)); }
double unpack_positive(double v) { return std::exp(v); }

double pack_gamma(double g) {
  // 2g-1 and 2(1-g) are exact for g in [0.5, 1]; keep a margin off the bounds
  constexpr double kEdge = 1e-3;
  const double f = std::clamp(2.0 * g - 1.0, kEdge, 1.0 - kEdge);
  const double omf = std::clamp(2.0 * (1.0 - g), kEdge, 1.0 - kEdge);
  return std::log(f / omf);
}

double unpack_gamma(double v) {
  const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return 0.5 + 0.5 * s;
}

}  // namespace detail

namespace {

using detail::pack_gamma;
using detail::pack_positive;
using detail::unpack_gamma;
using detail::unpack_positive;

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, count);
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& th : pool) th.join();
}

enum class Kind { kDamping, kGamma, kFeedback, kSensitivity, kLengthscale, kVariance, kSigma2 };

struct Coord {
  Kind kind;
  int m = 0;  // channel row (within the params being optimized)
  int r = 0;  // force
  int q = 0;  // lag / feedback column
};

struct Packer {
  std::vector<Coord> coords;

  Eigen::VectorXd pack(const LfmParams& p) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const Coord& c = coords[i];
      switch (c.kind) {
        case Kind::kDamping: v[static_cast<Eigen::Index>(i)] = pack_positive(std::max(p.damping[c.m], 1e-3)); break;
        case Kind::kGamma: v[static_cast<Eigen::Index>(i)] = pack_gamma(p.gamma[c.m]); break;
        case Kind::kFeedback: v[static_cast<Eigen::Index>(i)] = p.feedback(c.m, c.q - 1); break;
        case Kind::kSensitivity:
          v[static_cast<Eigen::Index>(i)] = p.sensitivity[static_cast<std::size_t>(c.r)](c.m, c.q);
          break;
        case Kind::kLengthscale:
          v[static_cast<Eigen::Index>(i)] = pack_positive(p.kernels[static_cast<std::size_t>(c.r)].lengthscale);
          break;
        case Kind::kVariance:
          v[static_cast<Eigen::Index>(i)] = pack_positive(p.kernels[static_cast<std::size_t>(c.r)].variance);
          break;
        case Kind::kSigma2: v[static_cast<Eigen::Index>(i)] = pack_positive(p.sigma2); break;
      }
    }
    return v;
  }

  void unpack(const Eigen::VectorXd& v, LfmParams* p) const {
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const Coord& c = coords[i];
      const double x = v[static_cast<Eigen::Index>(i)];
      switch (c.kind) {
        case Kind::kDamping: p->damping[c.m] = unpack_positive(x); break;
        case Kind::kGamma: p->gamma[c.m] = unpack_gamma(x); break;
        case Kind::kFeedback: p->feedback(c.m, c.q - 1) = x; break;
        case Kind::kSensitivity:
          p->sensitivity[static_cast<std::size_t>(c.r)](c.m, c.q) = x;
          break;
        case Kind::kLengthscale:
          p->kernels[static_cast<std::size_t>(c.r)].lengthscale = unpack_positive(x);
          break;
        case Kind::kVariance:
          p->kernels[static_cast<std::size_t>(c.r)].variance = unpack_positive(x);
          break;
        case Kind::kSigma2: p->sigma2 = unpack_positive(x); break;
      }
    }
  }
};

Packer build_packer(const LfmParams& p, const std::vector<int>& channels, bool shared) {
  Packer pk;
  for (int m : channels) {
    pk.coords.push_back({Kind::kDamping, m, 0, 0});
    pk.coords.push_back({Kind::kGamma, m, 0, 0});
    for (int q : p.active_feedback) pk.coords.push_back({Kind::kFeedback, m, 0, q});
    for (int r = 0; r < p.forces(); ++r)
      for (int q : p.active_lags) pk.coords.push_back({Kind::kSensitivity, m, r, q});
  }
  if (shared) {
    for (int r = 0; r < p.forces(); ++r) {
      pk.coords.push_back({Kind::kLengthscale, 0, r, 0});
      pk.coords.push_back({Kind::kVariance, 0, r, 0});
    }
    pk.coords.push_back({Kind::kSigma2, 0, 0, 0});
  }
  return pk;
}

using Objective = std::function<double(const Eigen::VectorXd&)>;

Eigen::VectorXd fd_gradient(const Objective& obj, const Eigen::VectorXd& x, double rel_step,
                            int threads) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd plus(n), minus(n);
  parallel_for(2 * n, threads, [&](int task) {
    const int i = task / 2;
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xi = x;
    if (task % 2 == 0) {
      xi[i] += h;
      plus[i] = obj(xi);
    } else {
      xi[i] -= h;
      minus[i] = obj(xi);
    }
  });
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    g[i] = (plus[i] - minus[i]) / (2.0 * h);
  }
  return g;
}

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double f0 = 0.0;               // objective at the starting point
  std::vector<double> accepted;  // objective value after each accepted step
  bool cap_reached = false;
};

MinimizeResult minimize_bfgs(const Objective& obj, Eigen::VectorXd x0, int max_iters,
                             double fd_step, int threads) {
  const int n = static_cast<int>(x0.size());
  MinimizeResult res;
  res.x = std::move(x0);
  res.f = obj(res.x);
  res.f0 = res.f;
  if (!std::isfinite(res.f))
    throw std::runtime_error(
        "optimizer: objective diverged at the initial point; loosen the initialization "
        "(larger measurement noise or smaller sensitivities)");
  if (n == 0 || max_iters <= 0) return res;

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g = fd_gradient(obj, res.x, fd_step, threads);
  constexpr double c1 = 1e-4;

  // Parameters live in log/logit space, so cap the per-iteration move: one
  // unit is an e-fold for the positive parameters, and uncapped quasi-Newton
  // steps early on can teleport into degenerate corners (lengthscale -> 0).
  constexpr double kMaxStepInf = 1.0;

  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::VectorXd dir = -(hinv * g);
    if (!dir.allFinite() || dir.dot(g) >= 0.0) {
      hinv.setIdentity();
      dir = -g;
    }

    auto line_search = [&](const Eigen::VectorXd& d, Eigen::VectorXd* x_out, double* f_out) {
      double step = std::min(1.0, kMaxStepInf / std::max(1e-12, d.lpNorm<Eigen::Infinity>()));
      for (int backtrack = 0; backtrack < 40; ++backtrack) {
        Eigen::VectorXd xt = res.x + step * d;
        const double ft = obj(xt);
        if (std::isfinite(ft) && ft <= res.f + c1 * step * g.dot(d)) {
          *x_out = std::move(xt);
          *f_out = ft;
          return true;
        }
        step *= 0.5;
      }
      return false;
    };

    double ft = std::numeric_limits<double>::infinity();
    Eigen::VectorXd xt;
    bool accepted = line_search(dir, &xt, &ft);
    if (!accepted && dir != -g) {
      hinv.setIdentity();
      dir = -g;
      accepted = line_search(dir, &xt, &ft);
    }
    if (!accepted) break;  // no descent even along the gradient: stop

    Eigen::VectorXd gt = fd_gradient(obj, xt, fd_step, threads);
    const Eigen::VectorXd s = xt - res.x;
    const Eigen::VectorXd y = gt - g;
    const double sy = s.dot(y);
    if (std::isfinite(sy) && sy > 1e-12 * s.norm() * y.norm()) {
      // H' = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = hinv * y;
      const double yhy = y.dot(hy);
      hinv -= rho * (s * hy.transpose() + hy * s.transpose());
      hinv += (rho * rho * yhy + rho) * (s * s.transpose());
    }

    const double prev = res.f;
    res.x = xt;
    res.f = ft;
    g = std::move(gt);
    res.accepted.push_back(res.f);

    if (g.lpNorm<Eigen::Infinity>() <= 1e-5 * std::max(1.0, std::abs(res.f))) break;
    if (std::abs(prev - res.f) <= 1e-9 * std::max(1.0, std::abs(res.f))) break;
    if (iter == max_iters - 1) res.cap_reached = true;
  }
  return res;
}

EnvelopeMatrix take_rows(const EnvelopeMatrix& env, const std::vector<int>& rows) {
  EnvelopeMatrix out;
  out.frame_rate = env.frame_rate;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), env.values.cols());
  out.channel_freqs.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = env.values.row(rows[i]);
    out.channel_freqs[i] = env.channel_freqs.empty() ? double(i + 1)
                                                     : env.channel_freqs[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

LfmParams take_channels(const LfmParams& p, const std::vector<int>& rows) {
  LfmParams out = p;
  const auto k = static_cast<Eigen::Index>(rows.size());
  out.damping.resize(k);
  out.gamma.resize(k);
  out.feedback.resize(k, p.feedback.cols());
  for (auto& s : out.sensitivity) s.resize(k, p.sensitivity.front().cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const int m = rows[static_cast<std::size_t>(i)];
    out.damping[i] = p.damping[m];
    out.gamma[i] = p.gamma[m];
    out.feedback.row(i) = p.feedback.row(m);
    for (std::size_t r = 0; r < p.sensitivity.size(); ++r)
      out.sensitivity[r].row(i) = p.sensitivity[r].row(m);
  }
  return out;
}

void scatter_channels(const LfmParams& sub, const std::vector<int>& rows, LfmParams* full) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int m = rows[i];
    full->damping[m] = sub.damping[static_cast<Eigen::Index>(i)];
    full->gamma[m] = sub.gamma[static_cast<Eigen::Index>(i)];
    full->feedback.row(m) = sub.feedback.row(static_cast<Eigen::Index>(i));
    for (std::size_t r = 0; r < sub.sensitivity.size(); ++r)
      full->sensitivity[r].row(m) = sub.sensitivity[r].row(static_cast<Eigen::Index>(i));
  }
  full->kernels = sub.kernels;
  full->sigma2 = sub.sigma2;
}

}  // namespace

std::vector<int> select_channels(const EnvelopeMatrix& env, int k) {
  const int channels = env.channels();
  if (k > channels) throw std::invalid_argument("select_channels: k > channel count");
  std::vector<int> order(static_cast<std::size_t>(channels));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return env.values.row(a).squaredNorm() > env.values.row(b).squaredNorm();
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<bool> skip_mask(const EnvelopeMatrix& env, double threshold_db) {
  if (!(threshold_db < 0.0)) throw std::invalid_argument("skip_mask: threshold_db must be < 0");
  const double peak = env.values.maxCoeff();
  const double cutoff = peak * std::pow(10.0, threshold_db / 20.0);
  std::vector<bool> skip(static_cast<std::size_t>(env.frames()));
  for (int t = 0; t < env.frames(); ++t)
    skip[static_cast<std::size_t>(t)] = env.values.col(t).maxCoeff() < cutoff;
  return skip;
}

LfmParams init_params(const EnvelopeMatrix& env, const TrainConfig& cfg) {
  const int channels = env.channels();
  const int frames = env.frames();
  if (channels < 1 || frames < 2) throw std::invalid_argument("init_params: degenerate envelope matrix");
  if (!(env.frame_rate > 0.0)) throw std::invalid_argument("init_params: frame_rate must be > 0");
  const double dt = 1.0 / env.frame_rate;

  LfmParams p;
  p.damping.resize(channels);
  p.gamma = Eigen::VectorXd::Ones(channels);
  p.feedback = Eigen::MatrixXd::Zero(channels, cfg.history);
  p.active_feedback = detail::clamp_index_set(cfg.active_feedback, 1, cfg.history);
  p.active_lags = detail::clamp_index_set(cfg.active_lags, 0, cfg.history);
  p.sensitivity.assign(static_cast<std::size_t>(cfg.forces),
                       Eigen::MatrixXd::Zero(channels, cfg.history + 1));

  const bool lag0_active =
      std::find(p.active_lags.begin(), p.active_lags.end(), 0) != p.active_lags.end();

  for (int m = 0; m < channels; ++m) {
    const Eigen::RowVectorXd row = env.values.row(m);
    const double peak = row.maxCoeff();
    if (row.squaredNorm() == 0.0)
      throw std::runtime_error("init_params: channel " + std::to_string(m) +
                               " is constant zero");

    // damping from the slope of the log envelope over the longest decay
    int best_start = 0, best_len = 0, run_start = 0;
    for (int t = 1; t < frames; ++t) {
      if (row[t] <= row[t - 1] + 1e-12 * peak) {
        if (t - run_start > best_len) {
          best_len = t - run_start;
          best_start = run_start;
        }
      } else {
        run_start = t;
      }
    }
    double damping = 10.0;
    if (best_len >= 2) {
      const double floor_m = 1e-12 * peak;
      double st = 0, sy = 0, sty = 0, stt = 0;
      const int count = best_len + 1;
      for (int t = best_start; t <= best_start + best_len; ++t) {
        const double tt = t * dt;
        const double y = std::log(std::max(row[t], floor_m));
        st += tt;
        sy += y;
        sty += tt * y;
        stt += tt * tt;
      }
      const double denom = count * stt - st * st;
      if (denom > 0.0) damping = -(count * sty - st * sy) / denom;
    }
    p.damping[m] = std::clamp(damping, 0.1, 200.0);

    if (lag0_active)
      for (auto& s : p.sensitivity) s(m, 0) = peak / std::log(2.0);
  }

  // kernel lengthscale from the first zero crossing of the mean envelope's
  // autocorrelation
  Eigen::VectorXd mean_env = env.values.colwise().mean();
  mean_env.array() -= mean_env.mean();
  double lengthscale = 1.0;
  if (mean_env.squaredNorm() > 0.0) {
    for (int lag = 1; lag < frames; ++lag) {
      double acc = 0.0;
      for (int t = 0; t + lag < frames; ++t) acc += mean_env[t] * mean_env[t + lag];
      if (acc <= 0.0) {
        lengthscale = lag * dt;
        break;
      }
    }
  }
  lengthscale = std::clamp(lengthscale, 0.02, 1.0);
  p.kernels.assign(static_cast<std::size_t>(cfg.forces), KernelParams{lengthscale, 1.0});
  p.sigma2 = 1e-2 * env.values.array().square().mean();
  return p;
}

TrainReport optimize(const EnvelopeMatrix& env, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int channels = env.channels();
  TrainConfig c = cfg;
  c.active_feedback = detail::clamp_index_set(cfg.active_feedback, 1, cfg.history);
  c.active_lags = detail::clamp_index_set(cfg.active_lags, 0, cfg.history);
  c.stage1_channels = std::min(cfg.stage1_channels, channels);

  TrainReport report;
  report.params = init_params(env, c);
  report.layout = build_layout(channels, c.forces, c.history, kLatentDim);

  const std::vector<int> stage1 = select_channels(env, c.stage1_channels);

  // stage 1: highest-energy channels plus the shared hyperparameters
  {
    const EnvelopeMatrix env1 = take_rows(env, stage1);
    LfmParams p1 = take_channels(report.params, stage1);
    const StateLayout layout1 =
        build_layout(static_cast<int>(stage1.size()), c.forces, c.history, kLatentDim);
    const std::vector<bool> skip = skip_mask(env1, c.skip_threshold_db);
    const Packer packer = build_packer(p1, [&] {
      std::vector<int> all(stage1.size());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }(), /*shared=*/true);

    const Objective obj = [&](const Eigen::VectorXd& v) {
      LfmParams trial = p1;
      packer.unpack(v, &trial);
      try {
        return -try_marginal_loglik(env1, trial, layout1, skip).value;
      } catch (...) {
        return std::numeric_limits<double>::infinity();
      }
    };
    MinimizeResult r = minimize_bfgs(obj, packer.pack(p1), c.max_iters, c.fd_step, c.threads);
    packer.unpack(r.x, &p1);
    scatter_channels(p1, stage1, &report.params);
    report.stage_channels.push_back(stage1);
    report.stage_trace_offsets.push_back(0);
    report.loglik_trace.push_back(-r.f0);
    for (double f : r.accepted) report.loglik_trace.push_back(-f);
    report.iteration_cap_reached |= r.cap_reached;
    report.final_loglik = -r.f;
  }

  // stage 2: append the remaining channels with stage-1 values frozen
  std::vector<int> remaining;
  for (int m = 0; m < channels; ++m)
    if (std::find(stage1.begin(), stage1.end(), m) == stage1.end()) remaining.push_back(m);

  if (!remaining.empty()) {
    const std::vector<bool> skip = skip_mask(env, c.skip_threshold_db);
    const Packer packer = build_packer(report.params, remaining, /*shared=*/false);
    const LfmParams base = report.params;
    const Objective obj = [&](const Eigen::VectorXd& v) {
      LfmParams trial = base;
      packer.unpack(v, &trial);
      try {
        return -try_marginal_loglik(env, trial, report.layout, skip).value;
      } catch (...) {
        return std::numeric_limits<double>::infinity();
      }
    };
    MinimizeResult r =
        minimize_bfgs(obj, packer.pack(report.params), c.max_iters, c.fd_step, c.threads);
    packer.unpack(r.x, &report.params);
    report.stage_channels.push_back(remaining);
    report.stage_trace_offsets.push_back(static_cast<int>(report.loglik_trace.size()));
    report.loglik_trace.push_back(-r.f0);
    for (double f : r.accepted) report.loglik_trace.push_back(-f);
    report.iteration_cap_reached |= r.cap_reached;
    report.final_loglik = -r.f;
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

int choose_forces(const EnvelopeMatrix& env, const TrainConfig& base, int r_min, int r_max) {
  const std::vector<bool> skip = skip_mask(env, base.skip_threshold_db);
  const auto observed =
      static_cast<double>(std::count(skip.begin(), skip.end(), false)) * env.channels();
  double best_bic = std::numeric_limits<double>::infinity();
  int best_r = r_min;
  for (int r = r_min; r <= r_max; ++r) {
    TrainConfig cfg = base;
    cfg.forces = r;
    const TrainReport rep = optimize(env, cfg);
    const Packer full = build_packer(rep.params, [&] {
      std::vector<int> all(static_cast<std::size_t>(env.channels()));
      std::iota(all.begin(), all.end(), 0);
      return all;
    }(), true);
    const double k = static_cast<double>(full.coords.size());
    const double bic = -2.0 * rep.final_loglik + k * std::log(std::max(observed, 2.0));
    if (bic < best_bic) {
      best_bic = bic;
      best_r = r;
    }
  }
  return best_r;
}

}  // namespace lfm
