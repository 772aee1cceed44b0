#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "lfm/audio_io.hpp"
#include "lfm/baselines.hpp"
#include "lfm/filterbank.hpp"
#include "lfm/model_file.hpp"
#include "lfm/training.hpp"

namespace lfm {

/// Front-end settings shared by decompose and evaluate.
struct FrontEndConfig {
  int channels = 16;
  double f_lo = 50.0;
  double f_hi = 7800.0;
  double lengthscale_ms = 20.0;
  int decimation = 10;
  int sample_rate = 16000;  // internal processing rate
};

struct EvalConfig {
  int nmf_iters = 500;
  double tnmf_beta = 100.0;
};

struct PipelineConfig {
  FrontEndConfig front;
  TrainConfig train;  // train.forces == 0 means choose R in {1,2,3} by BIC
  EvalConfig eval;
};

/// Reads a config JSON (all keys optional); empty path gives the defaults.
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_canonical_json(const PipelineConfig& cfg);

struct DecomposeResult {
  SubbandSet subbands;
  EnvelopeMatrix envelopes;   // frame rate = sample_rate / decimation
  Eigen::MatrixXd carriers;   // M x N at the audio rate
  FrontEnd frontend;
};

/// Resample to the internal rate, split into ERB subbands, demodulate each.
DecomposeResult decompose_audio(const AudioBuffer& input, const FrontEndConfig& cfg);

/// Staged ML fit plus modulator/carrier statistics, assembled into a model.
/// `carriers` may be empty only when sampling is not needed downstream.
ModelFile train_model(const EnvelopeMatrix& env, const Eigen::MatrixXd& carriers,
                      const FrontEnd& frontend, const PipelineConfig& cfg,
                      TrainReport* report = nullptr);

/// Sample new latents, run the model forward, render audio.
AudioBuffer sample_model(const ModelFile& model, double duration_seconds, std::uint64_t seed);

struct ReconstructionResult {
  EnvelopeMatrix reconstruction;
  double rms = 0.0;
  double cosine = 0.0;
};

/// Smoothed latent means pushed back through the envelope ODE.
ReconstructionResult reconstruct_model(const ModelFile& model, const EnvelopeMatrix& env);

}  // namespace lfm
