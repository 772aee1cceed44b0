#include "lfm/demod.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <unsupported/Eigen/FFT>

namespace lfm {
namespace {

/// Magnitude of the analytic signal (Hilbert envelope). For the narrowband
/// subbands this is the instantaneous amplitude; smoothing its log keeps the
/// estimate unbiased for oscillatory carriers, which plain |x| smoothing in
/// the log domain is not.
std::vector<double> analytic_magnitude(std::span<const double> x) {
  const std::size_t n = x.size();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(n);
  std::vector<std::complex<double>> time(x.begin(), x.end());
  fft.fwd(spec, time);
  // analytic signal: keep DC (and Nyquist for even n), double positive bins,
  // zero negative bins
  const std::size_t pos_end = (n % 2 == 0) ? n / 2 : (n + 1) / 2;
  for (std::size_t k = 1; k < pos_end; ++k) spec[k] *= 2.0;
  for (std::size_t k = (n % 2 == 0) ? n / 2 + 1 : pos_end; k < n; ++k) spec[k] = 0.0;
  std::vector<std::complex<double>> analytic(n);
  fft.inv(analytic, spec);
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(analytic[i]);
  return mag;
}

/// Zero-phase Gaussian smoothing (symmetric FIR, kernel renormalized at the
/// edges so constants are preserved exactly).
std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma_samples) {
  const long n = static_cast<long>(x.size());
  if (sigma_samples <= 0.0 || n < 2) return x;
  long half = static_cast<long>(std::ceil(4.0 * sigma_samples));
  half = std::min(half, n - 1);
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  for (long k = -half; k <= half; ++k)
    kernel[static_cast<std::size_t>(k + half)] =
        std::exp(-0.5 * (k / sigma_samples) * (k / sigma_samples));

  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const long lo = std::max<long>(0, i - half);
    const long hi = std::min<long>(n - 1, i + half);
    double acc = 0.0, wsum = 0.0;
    const double* kp = kernel.data() + (lo - (i - half));
    for (long j = lo; j <= hi; ++j, ++kp) {
      acc += *kp * x[static_cast<std::size_t>(j)];
      wsum += *kp;
    }
    out[static_cast<std::size_t>(i)] = acc / wsum;
  }
  return out;
}

}  // namespace

std::size_t envelope_frame_grid(std::size_t n_samples, std::size_t decimation) {
  if (decimation < 1) throw std::invalid_argument("envelope_frame_grid: decimation >= 1");
  return (n_samples + decimation - 1) / decimation;
}

DemodResult demodulate(std::span<const double> subband, double lengthscale_ms,
                       double sample_rate, std::size_t decimation) {
  if (subband.empty()) throw std::invalid_argument("demodulate: empty input");
  if (lengthscale_ms < 10.0)
    throw std::invalid_argument("demodulate: lengthscale_ms must be >= 10");
  if (sample_rate <= 0.0) throw std::invalid_argument("demodulate: sample_rate > 0");
  if (decimation < 1) throw std::invalid_argument("demodulate: decimation >= 1");

  const std::size_t n = subband.size();
  double peak = 0.0;
  for (double v : subband) peak = std::max(peak, std::abs(v));
  const double floor = std::max(1e-5 * peak, 1e-8);

  std::vector<double> mag = analytic_magnitude(subband);
  std::vector<double> logmag(n);
  for (std::size_t i = 0; i < n; ++i) logmag[i] = std::log(mag[i] + floor);

  const double sigma_samples = lengthscale_ms * 1e-3 * sample_rate;
  std::vector<double> smoothed = gaussian_smooth(logmag, sigma_samples);

  DemodResult out;
  out.lengthscale_ms = lengthscale_ms;
  out.floor = floor;
  out.envelope.resize(n);
  out.carrier.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double e = std::exp(smoothed[i]);
    e = std::max(e, floor);
    out.envelope[i] = e;
    out.carrier[i] = subband[i] / e;
  }
  const std::size_t frames = envelope_frame_grid(n, decimation);
  out.envelope_frames.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) out.envelope_frames[t] = out.envelope[t * decimation];
  return out;
}

}  // namespace lfm
