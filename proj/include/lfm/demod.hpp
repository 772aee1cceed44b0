#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lfm {

/// Envelope/carrier split of one subband. The full-rate envelope divides the
/// subband exactly (carrier = subband / envelope); `envelope_frames` is the
/// decimated copy shared by all channels.
struct DemodResult {
  std::vector<double> envelope;         // full rate, >= floor everywhere
  std::vector<double> carrier;
  std::vector<double> envelope_frames;  // every `decimation`-th envelope sample
  double lengthscale_ms = 0.0;
  double floor = 0.0;
};

/// Number of envelope frames for a signal of n samples: ceil(n / decimation).
std::size_t envelope_frame_grid(std::size_t n_samples, std::size_t decimation);

/// Positive smooth envelope by zero-phase Gaussian smoothing of the
/// log instantaneous amplitude; lengthscale_ms is the kernel standard
/// deviation. Requires lengthscale_ms >= 10.
DemodResult demodulate(std::span<const double> subband, double lengthscale_ms,
                       double sample_rate, std::size_t decimation = 1);

}  // namespace lfm
