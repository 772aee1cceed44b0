#include "lfm/synthesis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <unsupported/Eigen/FFT>

#include "lfm/demod.hpp"
#include "lfm/numerics.hpp"

namespace lfm {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kModulatorLengthscaleMs = 200.0;

Eigen::MatrixXd se_kernel(const Eigen::VectorXd& times, double lengthscale, double variance) {
  const Eigen::Index n = times.size();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d = (times[i] - times[j]) / lengthscale;
      k(i, j) = k(j, i) = variance * std::exp(-0.5 * d * d);
    }
  return k;
}

/// Hann-window periodogram: power per bin, bins 0..n/2.
std::vector<double> periodogram(const Eigen::RowVectorXd& x) {
  const std::size_t n = static_cast<std::size_t>(x.size());
  std::vector<std::complex<double>> time(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
    time[i] = x[static_cast<Eigen::Index>(i)] * w;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(n);
  fft.fwd(spec, time);
  std::vector<double> power(n / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

}  // namespace

std::vector<double> upsample_envelope(const Eigen::VectorXd& frames, double frame_rate,
                                      int sample_rate, std::size_t n_samples) {
  const double samples_per_frame = sample_rate / frame_rate;
  std::vector<double> out(n_samples);
  const Eigen::Index last = frames.size() - 1;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double pos = i / samples_per_frame;
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    if (lo >= last) {
      out[i] = frames[last];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out[i] = frames[lo] + frac * (frames[lo + 1] - frames[lo]);
  }
  return out;
}

ModulatorModel fit_modulator(const Eigen::MatrixXd& latent_means, double frame_rate) {
  if (latent_means.size() == 0) throw std::invalid_argument("fit_modulator: empty latents");
  if (!(frame_rate > 0.0)) throw std::invalid_argument("fit_modulator: frame_rate > 0");
  const Eigen::Index forces = latent_means.rows();
  const Eigen::Index frames = latent_means.cols();

  Eigen::VectorXd envelope = Eigen::VectorXd::Zero(frames);
  for (Eigen::Index r = 0; r < forces; ++r) {
    const Eigen::RowVectorXd row = latent_means.row(r);
    const DemodResult d = demodulate(std::span<const double>(row.data(), row.size()),
                                     kModulatorLengthscaleMs, frame_rate, 1);
    for (Eigen::Index t = 0; t < frames; ++t)
      envelope[t] += d.envelope[static_cast<std::size_t>(t)];
  }
  envelope /= static_cast<double>(forces);

  Eigen::VectorXd log_env = envelope.array().max(1e-12).log();
  ModulatorModel model;
  model.mean_offset = log_env.mean();

  const Eigen::VectorXd centered = log_env.array() - model.mean_offset;
  const double var0 = centered.squaredNorm() / std::max<double>(1, centered.size() - 1);
  if (var0 < 1e-14) {
    model.se_variance = 0.0;
    return model;  // degenerate constant latent
  }

  // maximum likelihood over a small (lengthscale, variance) grid on <= 300
  // subsampled points
  const int max_points = 300;
  const Eigen::Index stride = std::max<Eigen::Index>(1, frames / max_points);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index t = 0; t < frames; t += stride) idx.push_back(t);
  const auto npts = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd times(npts), y(npts);
  for (Eigen::Index i = 0; i < npts; ++i) {
    times[i] = idx[static_cast<std::size_t>(i)] / frame_rate;
    y[i] = centered[idx[static_cast<std::size_t>(i)]];
  }

  double best_ll = -std::numeric_limits<double>::infinity();
  for (int li = 0; li < 16; ++li) {
    const double ls = 0.02 * std::pow(2.0 / 0.02, li / 15.0);
    for (int vi = 0; vi < 12; ++vi) {
      const double v = var0 * std::pow(10.0, -2.0 + 3.0 * vi / 11.0);
      Eigen::MatrixXd k = se_kernel(times, ls, v);
      k.diagonal().array() += 1e-4 * v + 1e-10;
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() != Eigen::Success) continue;
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < npts; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
      const double ll = -0.5 * (y.dot(llt.solve(y)) + logdet);
      if (ll > best_ll) {
        best_ll = ll;
        model.se_lengthscale = ls;
        model.se_variance = v;
      }
    }
  }
  return model;
}

Eigen::MatrixXd sample_latents(const LfmParams& params, const ModulatorModel& mod, int frames,
                               double frame_rate, std::uint64_t seed) {
  if (frames < 1) throw std::invalid_argument("sample_latents: frames >= 1");
  const int forces = params.forces();
  const double dt = 1.0 / frame_rate;

  Eigen::MatrixXd out(forces, frames);
  for (int r = 0; r < forces; ++r) {
    const std::vector<double> path =
        sample_gp(kernel_to_ssm(params.kernels[static_cast<std::size_t>(r)]), dt,
                  static_cast<std::size_t>(frames), substream_seed(seed, static_cast<std::uint64_t>(r)));
    for (int t = 0; t < frames; ++t) out(r, t) = path[static_cast<std::size_t>(t)];
  }

  // one shared modulator path over all forces
  Eigen::VectorXd modulator = Eigen::VectorXd::Constant(frames, std::exp(mod.mean_offset));
  if (mod.se_variance > 0.0) {
    const int max_points = 2000;
    const int stride = frames > max_points ? (frames + max_points - 1) / max_points : 1;
    std::vector<int> idx;
    for (int t = 0; t < frames; t += stride) idx.push_back(t);
    if (idx.back() != frames - 1) idx.push_back(frames - 1);
    const auto npts = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd times(npts);
    for (Eigen::Index i = 0; i < npts; ++i) times[i] = idx[static_cast<std::size_t>(i)] * dt;

    Eigen::MatrixXd k = se_kernel(times, mod.se_lengthscale, mod.se_variance);
    k.diagonal().array() += 1e-10;
    const Eigen::MatrixXd root = psd_sqrt(k).root;
    Rng rng(substream_seed(seed, 0x4D4F44ull));  // modulator stream
    Eigen::VectorXd xi(npts);
    for (Eigen::Index i = 0; i < npts; ++i) xi[i] = rng.gaussian();
    // -v/2 keeps the lognormal path's mean at exp(mean_offset) instead of
    // exp(mean_offset + v/2), so sampled modulators sit at the fitted level
    const Eigen::VectorXd log_path =
        (root * xi).array() + mod.mean_offset - 0.5 * mod.se_variance;

    // linear interpolation back to the full grid
    for (int t = 0; t < frames; ++t) {
      std::size_t j = static_cast<std::size_t>(
          std::upper_bound(idx.begin(), idx.end(), t) - idx.begin());
      if (j == 0) j = 1;
      if (j >= idx.size()) j = idx.size() - 1;
      const int a = idx[j - 1], b = idx[j];
      const double frac = b > a ? double(t - a) / double(b - a) : 0.0;
      modulator[t] = std::exp(log_path[static_cast<Eigen::Index>(j - 1)] +
                              frac * (log_path[static_cast<Eigen::Index>(j)] -
                                      log_path[static_cast<Eigen::Index>(j - 1)]));
    }
  }

  for (int r = 0; r < forces; ++r) out.row(r).array() *= modulator.transpose().array();
  return out;
}

EnvelopeMatrix generate_envelopes(const LfmParams& params, const StateLayout& layout,
                                  const Eigen::MatrixXd& latents, double frame_rate,
                                  const std::vector<double>& channel_freqs,
                                  const Eigen::VectorXd& initial_outputs) {
  check_conformance(params, layout);
  if (latents.rows() != layout.R)
    throw std::invalid_argument("generate_envelopes: latent rows != R");
  const int frames = static_cast<int>(latents.cols());
  const double dt = 1.0 / frame_rate;

  Eigen::VectorXd state = Eigen::VectorXd::Zero(layout.n);
  if (initial_outputs.size() == layout.M)
    state.head(layout.M) = initial_outputs;
  else if (initial_outputs.size() != 0)
    throw std::invalid_argument("generate_envelopes: initial_outputs size != M");

  const LfmTransition step(params, layout, dt);
  EnvelopeMatrix env;
  env.frame_rate = frame_rate;
  env.channel_freqs = channel_freqs;
  env.values.resize(layout.M, frames);

  for (int t = 0; t < frames; ++t) {
    // pin the latent value to the supplied sample, history holds the earlier ones
    for (int r = 0; r < layout.R; ++r) {
      state[layout.latent_value(r)] = latents(r, t);
      state[layout.latent(r, 1)] = 0.0;
    }
    env.values.col(t) = state.head(layout.M).cwiseMax(0.0);
    if (!state.allFinite())
      throw std::runtime_error("generate_envelopes: non-finite trajectory at frame " +
                               std::to_string(t) + " (unstable parameters)");
    state = step(state);
  }
  return env;
}

CarrierModel fit_carriers(const SubbandSet& subbands, const EnvelopeMatrix& envelopes) {
  const int channels = subbands.fb.channels();
  if (envelopes.channels() != channels)
    throw std::invalid_argument("fit_carriers: channel count mismatch");
  const auto n = static_cast<std::size_t>(subbands.subbands.cols());
  const int fs = subbands.fb.sample_rate;

  CarrierModel cm;
  cm.channels.resize(static_cast<std::size_t>(channels));
  for (int m = 0; m < channels; ++m) {
    CarrierChannel& ch = cm.channels[static_cast<std::size_t>(m)];
    const double fc = subbands.fb.center_freqs[static_cast<std::size_t>(m)];
    const double bw = subbands.fb.bandwidths[static_cast<std::size_t>(m)];
    ch.sinusoid_freq = fc;

    const std::vector<double> env_up =
        upsample_envelope(envelopes.values.row(m).transpose(), envelopes.frame_rate, fs, n);
    const double peak = subbands.subbands.row(m).cwiseAbs().maxCoeff();
    if (peak == 0.0) continue;  // zero carrier: both powers stay 0
    const double floor = std::max(1e-5 * peak, 1e-8);
    Eigen::RowVectorXd carrier(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      carrier[static_cast<Eigen::Index>(i)] =
          subbands.subbands(m, static_cast<Eigen::Index>(i)) / std::max(env_up[i], floor);

    const std::vector<double> power = periodogram(carrier);
    const double bin_hz = static_cast<double>(fs) / static_cast<double>(n);
    const double f_lo = std::max(0.0, fc - bw);
    const double f_hi = std::min(fs / 2.0, fc + bw);
    std::size_t best = static_cast<std::size_t>(f_lo / bin_hz);
    double total = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      total += power[k];
      const double f = k * bin_hz;
      if (f >= f_lo && f <= f_hi && power[k] > power[best]) best = k;
    }
    if (total <= 0.0) continue;
    ch.sinusoid_freq = best * bin_hz;

    double in_window = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      const double f = k * bin_hz;
      if (f >= 0.97 * ch.sinusoid_freq && f <= 1.03 * ch.sinusoid_freq) in_window += power[k];
    }
    const double mean_square = carrier.squaredNorm() / static_cast<double>(n);
    ch.sinusoid_power = mean_square * in_window / total;
    ch.noise_power = mean_square * (1.0 - in_window / total);
  }
  return cm;
}

AudioBuffer render(const EnvelopeMatrix& envelopes, const CarrierModel& cm,
                   const ErbFilterbank& fb, std::uint64_t seed) {
  const int channels = fb.channels();
  if (envelopes.channels() != channels ||
      static_cast<int>(cm.channels.size()) != channels)
    throw std::invalid_argument("render: channel count mismatch");
  const int fs = fb.sample_rate;
  const auto n = static_cast<std::size_t>(
      std::llround(envelopes.frames() * fs / envelopes.frame_rate));

  SubbandSet set;
  set.fb = fb;
  set.subbands = Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(n));

  for (int m = 0; m < channels; ++m) {
    const CarrierChannel& ch = cm.channels[static_cast<std::size_t>(m)];
    const double total = ch.sinusoid_power + ch.noise_power;
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(m) + 1));
    std::vector<double> carrier(n, 0.0);
    if (total > 0.0) {
      const double sin_amp = std::sqrt(2.0 * ch.sinusoid_power / total);
      const double phase = 2.0 * kPi * rng.uniform_pos();
      for (std::size_t i = 0; i < n; ++i)
        carrier[i] = sin_amp * std::sin(2.0 * kPi * ch.sinusoid_freq * i / fs + phase);
      if (ch.noise_power > 0.0) {
        std::vector<double> noise(n);
        for (double& v : noise) v = rng.gaussian();
        noise = bandpass_zero_phase(fb, m, std::move(noise));
        double ms = 0.0;
        for (double v : noise) ms += v * v;
        ms /= static_cast<double>(n);
        const double target = ch.noise_power / total;
        if (ms > 0.0) {
          const double scale = std::sqrt(target / ms);
          for (std::size_t i = 0; i < n; ++i) carrier[i] += scale * noise[i];
        }
      }
    }
    const std::vector<double> env_up =
        upsample_envelope(envelopes.values.row(m).transpose(), envelopes.frame_rate, fs, n);
    for (std::size_t i = 0; i < n; ++i)
      set.subbands(m, static_cast<Eigen::Index>(i)) = env_up[i] * carrier[i];
  }

  AudioBuffer out = synthesize(set);
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out.samples) v *= 0.9 / peak;
  return out;
}

}  // namespace lfm
