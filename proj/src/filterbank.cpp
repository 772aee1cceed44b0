#include "lfm/filterbank.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace lfm {
namespace {

constexpr double kPi = std::numbers::pi;
// Relation between the gammatone bandwidth parameter and the ERB of a
// 4th-order gammatone (Patterson/Holdsworth).
constexpr double kBandwidthFactor = 1.019;

// Resonator section b0 / (1 + a1 z^-1 + a2 z^-2): complex pole pair at the
// center frequency, normalized to unit gain there.
struct Biquad {
  double b0;
  double a1;
  double a2;
};

Biquad resonator(double fc, double bw, double fs) {
  const double r = std::exp(-2.0 * kPi * kBandwidthFactor * bw / fs);
  const double theta = 2.0 * kPi * fc / fs;
  Biquad s{1.0, -2.0 * r * std::cos(theta), r * r};
  const std::complex<double> zi = std::polar(1.0, -theta);
  const std::complex<double> den = 1.0 + s.a1 * zi + s.a2 * zi * zi;
  s.b0 = std::abs(den);
  return s;
}

std::vector<Biquad> channel_sections(const ErbFilterbank& fb, int m) {
  std::vector<Biquad> sections;
  sections.reserve(static_cast<std::size_t>(fb.filter_order));
  for (int k = 0; k < fb.filter_order; ++k)
    sections.push_back(resonator(fb.center_freqs[static_cast<std::size_t>(m)],
                                 fb.bandwidth_scale * fb.bandwidths[static_cast<std::size_t>(m)],
                                 fb.sample_rate));
  return sections;
}

void filter_in_place(const std::vector<Biquad>& sections, std::vector<double>& x) {
  for (const Biquad& s : sections) {
    double w1 = 0.0, w2 = 0.0;  // direct form II
    for (double& v : x) {
      const double w0 = v - s.a1 * w1 - s.a2 * w2;
      v = s.b0 * w0;
      w2 = w1;
      w1 = w0;
    }
  }
}

void filtfilt(const std::vector<Biquad>& sections, std::vector<double>& x) {
  filter_in_place(sections, x);
  std::reverse(x.begin(), x.end());
  filter_in_place(sections, x);
  std::reverse(x.begin(), x.end());
}

}  // namespace

double erb_number(double f_hz) { return 21.4 * std::log10(1.0 + 0.00437 * f_hz); }

double erb_number_inverse(double erb) {
  return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437;
}

double erb_bandwidth(double f_hz) { return 24.7 * (0.00437 * f_hz + 1.0); }

double channel_response(const ErbFilterbank& fb, int m, double f_hz) {
  const auto sections = channel_sections(fb, m);
  const double omega = 2.0 * kPi * f_hz / fb.sample_rate;
  const std::complex<double> zi = std::polar(1.0, -omega);
  double mag2 = 1.0;
  for (const Biquad& s : sections) {
    const std::complex<double> h = s.b0 / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    mag2 *= std::norm(h);
  }
  return mag2;  // |H|^2 == forward-backward magnitude
}

ErbFilterbank design_filterbank(double f_lo, double f_hi, int channels, int sample_rate,
                                int filter_order) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo))
    throw std::invalid_argument("design_filterbank: need 0 < f_lo < f_hi");
  if (!(f_hi < sample_rate / 2.0))
    throw std::invalid_argument("design_filterbank: f_hi must be below Nyquist");
  if (channels < 2) throw std::invalid_argument("design_filterbank: need M >= 2");
  if (filter_order < 1) throw std::invalid_argument("design_filterbank: order >= 1");

  ErbFilterbank fb;
  fb.sample_rate = sample_rate;
  fb.filter_order = filter_order;
  const double e_lo = erb_number(f_lo);
  const double e_hi = erb_number(f_hi);
  const double erb_spacing = (e_hi - e_lo) / (channels - 1);
  // Wide enough to cover the grid, capped where the pole realization would
  // degenerate at low center frequencies.
  fb.bandwidth_scale = std::clamp(0.9 * erb_spacing, 1.0, 2.5);
  fb.center_freqs.resize(static_cast<std::size_t>(channels));
  fb.bandwidths.resize(static_cast<std::size_t>(channels));
  for (int m = 0; m < channels; ++m) {
    const double e = e_lo + (e_hi - e_lo) * m / (channels - 1);
    double fc = erb_number_inverse(e);
    if (m == 0) fc = f_lo;  // pin the endpoints exactly
    if (m == channels - 1) fc = f_hi;
    fb.center_freqs[static_cast<std::size_t>(m)] = fc;
    fb.bandwidths[static_cast<std::size_t>(m)] = erb_bandwidth(fc);
  }

  // Least-squares gains: sum_m g_m R_m(f) ~= 1 over the analysis band. The
  // grid is ERB-spaced so every channel's neighborhood carries equal weight;
  // a linear grid would let the wide top channels dominate the fit.
  const int grid = 2048;
  Eigen::MatrixXd response(grid, channels);
  for (int j = 0; j < grid; ++j) {
    const double f = erb_number_inverse(e_lo + (e_hi - e_lo) * j / (grid - 1));
    for (int m = 0; m < channels; ++m) response(j, m) = channel_response(fb, m, f);
  }
  Eigen::VectorXd g =
      response.colPivHouseholderQr().solve(Eigen::VectorXd::Ones(grid));
  fb.gains.resize(static_cast<std::size_t>(channels));
  for (int m = 0; m < channels; ++m)
    fb.gains[static_cast<std::size_t>(m)] = std::max(g[m], 1e-8);
  return fb;
}

std::vector<double> bandpass_zero_phase(const ErbFilterbank& fb, int m,
                                        std::vector<double> signal) {
  filtfilt(channel_sections(fb, m), signal);
  return signal;
}

SubbandSet analyze(const AudioBuffer& signal, const ErbFilterbank& fb) {
  if (signal.sample_rate != fb.sample_rate)
    throw std::invalid_argument("analyze: signal rate != filterbank rate");
  const int channels = fb.channels();
  const auto n = static_cast<Eigen::Index>(signal.samples.size());
  SubbandSet out;
  out.fb = fb;
  out.subbands.resize(channels, n);
  for (int m = 0; m < channels; ++m) {
    std::vector<double> work = bandpass_zero_phase(fb, m, signal.samples);
    for (Eigen::Index i = 0; i < n; ++i) out.subbands(m, i) = work[static_cast<std::size_t>(i)];
  }
  return out;
}

AudioBuffer synthesize(const SubbandSet& subbands) {
  if (subbands.subbands.rows() == 0 || subbands.subbands.rows() != subbands.fb.channels())
    throw std::invalid_argument("synthesize: subband/filterbank channel mismatch");
  AudioBuffer out;
  out.sample_rate = subbands.fb.sample_rate;
  const Eigen::Index n = subbands.subbands.cols();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (int m = 0; m < subbands.fb.channels(); ++m)
    acc += subbands.fb.gains[static_cast<std::size_t>(m)] *
           subbands.subbands.row(m).transpose();
  out.samples.assign(acc.data(), acc.data() + n);
  return out;
}

}  // namespace lfm
