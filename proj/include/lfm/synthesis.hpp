#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "lfm/audio_io.hpp"
#include "lfm/filterbank.hpp"
#include "lfm/lfm_core.hpp"

namespace lfm {

/// Squared-exponential GP over the log of the latent forces' slow envelope;
/// sampled paths of exp(GP) gate the generated latents so their energy
/// co-occurs in bursts the way the training signal's did.
struct ModulatorModel {
  double se_lengthscale = 0.2;  // seconds
  double se_variance = 0.0;
  double mean_offset = 0.0;     // mean of the log envelope
};

struct CarrierChannel {
  double sinusoid_freq = 0.0;  // Hz
  double sinusoid_power = 0.0;
  double noise_power = 0.0;
};

struct CarrierModel {
  std::vector<CarrierChannel> channels;
};

/// Demodulates each latent mean at the modulator lengthscale (200 ms),
/// averages the envelopes, and fits the SE hyperparameters to the log
/// envelope by maximum likelihood on a subsampled grid.
ModulatorModel fit_modulator(const Eigen::MatrixXd& latent_means, double frame_rate);

/// Independent Matern samples per force, gated by one shared modulator path.
Eigen::MatrixXd sample_latents(const LfmParams& params, const ModulatorModel& mod, int frames,
                               double frame_rate, std::uint64_t seed);

/// Deterministic forward run of the envelope ODE driven by the supplied
/// latents (the latent SDE state is overridden each step). Outputs are
/// clamped at zero in the returned matrix; initial_outputs defaults to zeros.
EnvelopeMatrix generate_envelopes(const LfmParams& params, const StateLayout& layout,
                                  const Eigen::MatrixXd& latents, double frame_rate,
                                  const std::vector<double>& channel_freqs,
                                  const Eigen::VectorXd& initial_outputs = Eigen::VectorXd());

/// Sinusoid-plus-noise carrier statistics: spectral peak within each
/// channel's band, power in a +-3% window around it, remainder as noise.
CarrierModel fit_carriers(const SubbandSet& subbands, const EnvelopeMatrix& envelopes);

/// Render envelopes over synthetic carriers (seeded sinusoid phase and
/// band-filtered noise), sum through the filterbank, peak-normalize to 0.9.
AudioBuffer render(const EnvelopeMatrix& envelopes, const CarrierModel& cm,
                   const ErbFilterbank& fb, std::uint64_t seed);

/// Piecewise-linear upsampling of envelope frames to the audio rate.
std::vector<double> upsample_envelope(const Eigen::VectorXd& frames, double frame_rate,
                                      int sample_rate, std::size_t n_samples);

}  // namespace lfm
