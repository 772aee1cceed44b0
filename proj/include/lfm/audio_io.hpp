#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

namespace lfm {

/// Mono audio signal plus its sample rate. Samples are nominally in [-1, 1]
/// but nothing clips; float WAV output keeps whatever range is present.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Envelope frames, one row per channel, column = frame.
struct EnvelopeMatrix {
  Eigen::MatrixXd values;            // M x T, nonnegative
  double frame_rate = 0.0;           // Hz
  std::vector<double> channel_freqs; // size M, strictly increasing

  int channels() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

/// Read a PCM16 or float32 WAV. Channels are averaged to mono, PCM16 is
/// scaled by 1/32768.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Write a mono float32 WAV. Round-trips through read_wav within 1e-6.
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path);

/// Band-limited (windowed-sinc) resampling; preserves duration within one
/// output sample. Identity when the rate already matches.
AudioBuffer resample(const AudioBuffer& buffer, int target_rate);

/// Matrix CSV with header line `# channels=M frames=T frame_rate=R`.
void write_matrix_csv(const Eigen::MatrixXd& values, double frame_rate,
                      const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, double* frame_rate);

void write_envelope_csv(const EnvelopeMatrix& env, const std::filesystem::path& path);

/// Loads values and frame_rate; channel_freqs are not stored in CSV and are
/// filled with 1..M placeholders (callers holding a filterbank overwrite them).
EnvelopeMatrix read_envelope_csv(const std::filesystem::path& path);

}  // namespace lfm
