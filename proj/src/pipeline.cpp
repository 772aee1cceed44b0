#include "lfm/pipeline.hpp"

#include <fstream>
#include <json.hpp>
#include <span>
#include <stdexcept>

#include "lfm/demod.hpp"
#include "lfm/inference.hpp"
#include "lfm/numerics.hpp"
#include "lfm/synthesis.hpp"

namespace lfm {
namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed config JSON in " + path.string() + ": " + e.what());
  }
  maybe(j, "channels", &cfg.front.channels);
  maybe(j, "f_lo", &cfg.front.f_lo);
  maybe(j, "f_hi", &cfg.front.f_hi);
  maybe(j, "lengthscale_ms", &cfg.front.lengthscale_ms);
  maybe(j, "decimation", &cfg.front.decimation);
  maybe(j, "sample_rate", &cfg.front.sample_rate);
  maybe(j, "forces", &cfg.train.forces);
  maybe(j, "history", &cfg.train.history);
  maybe(j, "active_feedback", &cfg.train.active_feedback);
  maybe(j, "active_lags", &cfg.train.active_lags);
  maybe(j, "stage1_channels", &cfg.train.stage1_channels);
  maybe(j, "max_iters", &cfg.train.max_iters);
  maybe(j, "fd_step", &cfg.train.fd_step);
  maybe(j, "seed", &cfg.train.seed);
  maybe(j, "skip_threshold_db", &cfg.train.skip_threshold_db);
  maybe(j, "threads", &cfg.train.threads);
  maybe(j, "nmf_iters", &cfg.eval.nmf_iters);
  maybe(j, "tnmf_beta", &cfg.eval.tnmf_beta);
  return cfg;
}

std::string config_canonical_json(const PipelineConfig& cfg) {
  json j;
  j["channels"] = cfg.front.channels;
  j["f_lo"] = cfg.front.f_lo;
  j["f_hi"] = cfg.front.f_hi;
  j["lengthscale_ms"] = cfg.front.lengthscale_ms;
  j["decimation"] = cfg.front.decimation;
  j["sample_rate"] = cfg.front.sample_rate;
  j["forces"] = cfg.train.forces;
  j["history"] = cfg.train.history;
  j["active_feedback"] = cfg.train.active_feedback;
  j["active_lags"] = cfg.train.active_lags;
  j["stage1_channels"] = cfg.train.stage1_channels;
  j["max_iters"] = cfg.train.max_iters;
  j["fd_step"] = cfg.train.fd_step;
  j["seed"] = cfg.train.seed;
  j["skip_threshold_db"] = cfg.train.skip_threshold_db;
  j["nmf_iters"] = cfg.eval.nmf_iters;
  j["tnmf_beta"] = cfg.eval.tnmf_beta;
  return j.dump();
}

DecomposeResult decompose_audio(const AudioBuffer& input, const FrontEndConfig& cfg) {
  DecomposeResult out;
  const AudioBuffer audio = resample(input, cfg.sample_rate);
  const ErbFilterbank fb =
      design_filterbank(cfg.f_lo, cfg.f_hi, cfg.channels, cfg.sample_rate);
  out.subbands = analyze(audio, fb);
  out.frontend.filterbank = fb;
  out.frontend.demod = {cfg.lengthscale_ms, cfg.decimation};

  const auto n = static_cast<std::size_t>(out.subbands.subbands.cols());
  const std::size_t frames = envelope_frame_grid(n, static_cast<std::size_t>(cfg.decimation));
  out.envelopes.frame_rate = static_cast<double>(cfg.sample_rate) / cfg.decimation;
  out.envelopes.channel_freqs = fb.center_freqs;
  out.envelopes.values.resize(cfg.channels, static_cast<Eigen::Index>(frames));
  out.carriers.resize(cfg.channels, static_cast<Eigen::Index>(n));

  for (int m = 0; m < cfg.channels; ++m) {
    const Eigen::RowVectorXd row = out.subbands.subbands.row(m);
    const DemodResult d =
        demodulate(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                   cfg.lengthscale_ms, cfg.sample_rate, static_cast<std::size_t>(cfg.decimation));
    for (std::size_t t = 0; t < frames; ++t)
      out.envelopes.values(m, static_cast<Eigen::Index>(t)) = d.envelope_frames[t];
    for (std::size_t i = 0; i < n; ++i)
      out.carriers(m, static_cast<Eigen::Index>(i)) = d.carrier[i];
  }
  return out;
}

ModelFile train_model(const EnvelopeMatrix& env, const Eigen::MatrixXd& carriers,
                      const FrontEnd& frontend, const PipelineConfig& cfg,
                      TrainReport* report_out) {
  PipelineConfig c = cfg;
  if (c.train.forces == 0) c.train.forces = choose_forces(env, c.train);

  TrainReport report = optimize(env, c.train);

  ModelFile model;
  model.filterbank = frontend.filterbank;
  model.demod = frontend.demod;
  model.params = report.params;
  model.layout = report.layout;
  model.train_loglik = report.final_loglik;
  model.config_hash = string_hash_hex(config_canonical_json(c));

  // modulator statistics from the smoothed latent posterior
  const std::vector<bool> skip = skip_mask(env, c.train.skip_threshold_db);
  const FilterResult fr = ckf_filter(env, model.params, model.layout, skip);
  const SmoothResult sr = rts_smooth(fr, model.params, model.layout);
  model.modulator = fit_modulator(latent_means(sr, model.layout), env.frame_rate);

  // carrier statistics from the original carriers
  if (carriers.size() > 0) {
    if (carriers.rows() != env.values.rows())
      throw std::invalid_argument("train_model: carrier rows != envelope rows");
    SubbandSet set;
    set.fb = frontend.filterbank;
    set.subbands.resize(carriers.rows(), carriers.cols());
    for (Eigen::Index m = 0; m < carriers.rows(); ++m) {
      const std::vector<double> env_up =
          upsample_envelope(env.values.row(m).transpose(), env.frame_rate,
                            frontend.filterbank.sample_rate,
                            static_cast<std::size_t>(carriers.cols()));
      for (Eigen::Index i = 0; i < carriers.cols(); ++i)
        set.subbands(m, i) = env_up[static_cast<std::size_t>(i)] * carriers(m, i);
    }
    model.carriers = fit_carriers(set, env);
  } else {
    // no carrier data: fall back to centered sinusoids
    model.carriers.channels.assign(
        static_cast<std::size_t>(model.layout.M), CarrierChannel{});
    for (int m = 0; m < model.layout.M; ++m) {
      model.carriers.channels[static_cast<std::size_t>(m)].sinusoid_freq =
          model.filterbank.center_freqs[static_cast<std::size_t>(m)];
      model.carriers.channels[static_cast<std::size_t>(m)].sinusoid_power = 0.5;
      model.carriers.channels[static_cast<std::size_t>(m)].noise_power = 0.5;
    }
  }

  if (report_out) *report_out = std::move(report);
  return model;
}

AudioBuffer sample_model(const ModelFile& model, double duration_seconds, std::uint64_t seed) {
  if (!(duration_seconds > 0.0))
    throw std::invalid_argument("sample_model: duration must be > 0");
  const double frame_rate = model.envelope_frame_rate();
  const int frames = std::max(1, static_cast<int>(std::llround(duration_seconds * frame_rate)));
  const Eigen::MatrixXd latents =
      sample_latents(model.params, model.modulator, frames, frame_rate, seed);
  const EnvelopeMatrix env =
      generate_envelopes(model.params, model.layout, latents, frame_rate,
                         model.filterbank.center_freqs);
  return render(env, model.carriers, model.filterbank,
                substream_seed(seed, 0xCA881E5ull));
}

ReconstructionResult reconstruct_model(const ModelFile& model, const EnvelopeMatrix& env) {
  if (env.channels() != model.layout.M)
    throw std::invalid_argument("reconstruct: envelope channels != model M");
  const std::vector<bool> skip = skip_mask(env, -60.0);
  const FilterResult fr = ckf_filter(env, model.params, model.layout, skip);
  const SmoothResult sr = rts_smooth(fr, model.params, model.layout);
  const Eigen::MatrixXd lat = latent_means(sr, model.layout);

  ReconstructionResult out;
  out.reconstruction =
      generate_envelopes(model.params, model.layout, lat, env.frame_rate, env.channel_freqs,
                         env.values.col(0));
  out.rms = rms_error(out.reconstruction.values, env.values);
  out.cosine = cosine_distance(out.reconstruction.values, env.values);
  return out;
}

}  // namespace lfm
