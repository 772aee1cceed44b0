#pragma once

#include <filesystem>
#include <string>

#include "lfm/filterbank.hpp"
#include "lfm/lfm_core.hpp"
#include "lfm/synthesis.hpp"

namespace lfm {

struct DemodSpec {
  double lengthscale_ms = 20.0;
  int decimation = 10;
};

/// Everything needed to reconstruct and to sample: front-end configuration,
/// fitted model, carrier and modulator statistics, training provenance.
struct ModelFile {
  std::string version = "1";
  ErbFilterbank filterbank;
  DemodSpec demod;
  LfmParams params;
  StateLayout layout;
  CarrierModel carriers;
  ModulatorModel modulator;
  std::string config_hash;
  double train_loglik = 0.0;

  double envelope_frame_rate() const {
    return static_cast<double>(filterbank.sample_rate) / demod.decimation;
  }
};

/// JSON round-trips field-for-field (shortest-digit double encoding).
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

/// Front-end spec written by `decompose` (fb.json) and consumed by `train`.
struct FrontEnd {
  ErbFilterbank filterbank;
  DemodSpec demod;
};

void save_frontend(const FrontEnd& fe, const std::filesystem::path& path);
FrontEnd load_frontend(const std::filesystem::path& path);

/// FNV-1a hash of a file's bytes, hex-encoded; used for manifests.
std::string file_hash_hex(const std::filesystem::path& path);
std::string string_hash_hex(const std::string& bytes);

}  // namespace lfm
