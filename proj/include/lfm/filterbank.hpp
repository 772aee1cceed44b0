#pragma once

#include <Eigen/Core>
#include <vector>

#include "lfm/audio_io.hpp"

namespace lfm {

/// Bank of gammatone-style bandpass filters on an ERB-spaced grid.
/// Analysis runs each channel forward-backward (zero phase), so a channel's
/// effective magnitude response is |H|^2 of the underlying cascade.
struct ErbFilterbank {
  std::vector<double> center_freqs;  // Hz, strictly increasing
  std::vector<double> bandwidths;    // ERB bandwidths, Hz
  std::vector<double> gains;         // synthesis compensation gains
  int sample_rate = 0;
  int filter_order = 4;  // cascaded resonator stages per channel
  // Realized filters are widened by this factor so a sparse grid (> 1 ERB
  // between centers) still covers the band after the forward-backward pass
  // narrows each response.
  double bandwidth_scale = 1.0;

  int channels() const { return static_cast<int>(center_freqs.size()); }
};

struct SubbandSet {
  Eigen::MatrixXd subbands;  // M x N band-limited signals
  ErbFilterbank fb;
};

/// ERB-number scale E(f) = 21.4 log10(1 + 0.00437 f).
double erb_number(double f_hz);
double erb_number_inverse(double erb);
/// ERB bandwidth 24.7 (0.00437 f + 1).
double erb_bandwidth(double f_hz);

/// Centers uniformly spaced on the ERB-number scale with endpoints f_lo and
/// f_hi; gains solved by least squares so the summed forward-backward
/// response is flat over [f_lo, f_hi].
ErbFilterbank design_filterbank(double f_lo, double f_hi, int channels, int sample_rate,
                                int filter_order = 4);

/// Zero-phase (forward-backward) filtering of the signal into M subbands.
SubbandSet analyze(const AudioBuffer& signal, const ErbFilterbank& fb);

/// Apply per-channel gains and sum.
AudioBuffer synthesize(const SubbandSet& subbands);

/// Squared-magnitude response of channel `m`'s forward-backward chain at
/// frequency f_hz (the response seen by analyze). Used for gain calibration
/// and exposed for tests.
double channel_response(const ErbFilterbank& fb, int m, double f_hz);

/// Forward-backward filtering of one signal through channel m's chain (the
/// per-channel operation behind analyze; synthesis uses it to band-shape
/// carrier noise).
std::vector<double> bandpass_zero_phase(const ErbFilterbank& fb, int m,
                                        std::vector<double> signal);

}  // namespace lfm
