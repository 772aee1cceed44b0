// lfmsynth: decompose natural sounds into subband envelopes, fit the latent
// force model, reconstruct, and sample novel audio from the fitted model.

#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "lfm/baselines.hpp"
#include "lfm/inference.hpp"
#include "lfm/numerics.hpp"
#include "lfm/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarnings = 2;

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
}

int run_decompose(const std::string& input, const std::string& out_dir,
                  const lfm::PipelineConfig& cfg) {
  const lfm::AudioBuffer audio = lfm::read_wav(input);
  const lfm::DecomposeResult dec = lfm::decompose_audio(audio, cfg.front);
  fs::create_directories(out_dir);
  lfm::write_envelope_csv(dec.envelopes, fs::path(out_dir) / "envelopes.csv");
  lfm::write_matrix_csv(dec.carriers, cfg.front.sample_rate,
                        fs::path(out_dir) / "carriers.csv");
  lfm::save_frontend(dec.frontend, fs::path(out_dir) / "fb.json");
  std::cout << "decompose: " << dec.envelopes.channels() << " channels x "
            << dec.envelopes.frames() << " frames -> " << out_dir << "\n";
  return kExitOk;
}

int run_train(const std::string& env_path, const std::string& carriers_path,
              const std::string& fb_path, const std::string& out_dir,
              const lfm::PipelineConfig& cfg) {
  const fs::path env_file(env_path);
  const fs::path fb_file =
      fb_path.empty() ? env_file.parent_path() / "fb.json" : fs::path(fb_path);
  const fs::path carrier_file =
      carriers_path.empty() ? env_file.parent_path() / "carriers.csv" : fs::path(carriers_path);

  lfm::EnvelopeMatrix env = lfm::read_envelope_csv(env_file);
  const lfm::FrontEnd frontend = lfm::load_frontend(fb_file);
  if (frontend.filterbank.channels() != env.channels())
    throw std::runtime_error("train: fb.json channel count does not match envelopes.csv");
  env.channel_freqs = frontend.filterbank.center_freqs;

  Eigen::MatrixXd carriers;
  if (fs::exists(carrier_file)) {
    double rate = 0.0;
    carriers = lfm::read_matrix_csv(carrier_file, &rate);
  }

  lfm::TrainReport report;
  const lfm::ModelFile model = lfm::train_model(env, carriers, frontend, cfg, &report);
  fs::create_directories(out_dir);
  lfm::save_model(model, fs::path(out_dir) / "model.json");

  json rep;
  rep["final_loglik"] = report.final_loglik;
  rep["loglik_trace"] = report.loglik_trace;
  rep["stage_trace_offsets"] = report.stage_trace_offsets;
  rep["stage_channels"] = report.stage_channels;
  rep["wall_seconds"] = report.wall_seconds;
  rep["iteration_cap_reached"] = report.iteration_cap_reached;
  rep["forces"] = model.layout.R;
  write_json(rep, fs::path(out_dir) / "report.json");

  std::cout << "train: loglik " << report.final_loglik << " ("
            << report.wall_seconds << " s)\n";
  if (report.iteration_cap_reached) {
    std::cerr << "warning: iteration cap reached before convergence\n";
    return kExitWarnings;
  }
  return kExitOk;
}

int run_reconstruct(const std::string& model_path, const std::string& env_path,
                    const std::string& out_dir) {
  const lfm::ModelFile model = lfm::load_model(model_path);
  lfm::EnvelopeMatrix env = lfm::read_envelope_csv(env_path);
  if (env.channels() != model.layout.M)
    throw std::runtime_error("reconstruct: envelope channels (" +
                             std::to_string(env.channels()) + ") != model M (" +
                             std::to_string(model.layout.M) + ")");
  env.channel_freqs = model.filterbank.center_freqs;
  const lfm::ReconstructionResult rec = lfm::reconstruct_model(model, env);
  fs::create_directories(out_dir);
  lfm::write_envelope_csv(rec.reconstruction, fs::path(out_dir) / "recon.csv");
  write_json(json{{"rms", rec.rms}, {"cosine", rec.cosine}},
             fs::path(out_dir) / "metrics.json");
  std::cout << "reconstruct: rms " << rec.rms << " cosine " << rec.cosine << "\n";
  return kExitOk;
}

int run_sample(const std::string& model_path, double duration, std::uint64_t seed,
               const std::string& out_path) {
  const lfm::ModelFile model = lfm::load_model(model_path);
  const lfm::AudioBuffer audio = lfm::sample_model(model, duration, seed);
  lfm::write_wav(audio, out_path);

  json manifest;
  manifest["seed"] = seed;
  manifest["duration"] = duration;
  manifest["model_hash"] = lfm::file_hash_hex(model_path);
  manifest["samples"] = audio.samples.size();
  write_json(manifest, fs::path(out_path).replace_extension(".manifest.json"));
  std::cout << "sample: " << audio.samples.size() << " samples -> " << out_path << "\n";
  return kExitOk;
}

int run_evaluate(const std::string& sound_dir, const std::string& out_path,
                 const lfm::PipelineConfig& base_cfg) {
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(sound_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw std::runtime_error("evaluate: no .wav files in " + sound_dir);

  int width = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LFM_SOUND_THREADS")) width = std::max(1, std::atoi(env));
  width = std::min<int>(width, static_cast<int>(wavs.size()));

  lfm::PipelineConfig cfg = base_cfg;
  cfg.train.threads =
      std::max(1, static_cast<int>(std::thread::hardware_concurrency()) / width);

  std::vector<lfm::SoundMetrics> metrics(wavs.size());
  std::vector<bool> ok(wavs.size(), false);
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < wavs.size();) {
      try {
        const lfm::AudioBuffer audio = lfm::read_wav(wavs[i]);
        const lfm::DecomposeResult dec = lfm::decompose_audio(audio, cfg.front);
        lfm::TrainReport report;
        const lfm::ModelFile model =
            lfm::train_model(dec.envelopes, dec.carriers, dec.frontend, cfg, &report);
        const lfm::ReconstructionResult rec = lfm::reconstruct_model(model, dec.envelopes);

        const int k = model.layout.R;  // matched rank
        const lfm::NmfFactors fn =
            lfm::nmf(dec.envelopes.values, k, cfg.eval.nmf_iters, cfg.train.seed);
        const lfm::NmfFactors ft = lfm::tnmf(dec.envelopes.values, k, cfg.eval.nmf_iters,
                                             cfg.eval.tnmf_beta, cfg.train.seed);
        const Eigen::MatrixXd vn = fn.W * fn.Hact;
        const Eigen::MatrixXd vt = ft.W * ft.Hact;

        lfm::SoundMetrics& sm = metrics[i];
        sm.sound = wavs[i].stem().string();
        sm.lfm = {rec.rms, rec.cosine};
        sm.nmf = {lfm::rms_error(vn, dec.envelopes.values),
                  lfm::cosine_distance(vn, dec.envelopes.values)};
        sm.tnmf = {lfm::rms_error(vt, dec.envelopes.values),
                   lfm::cosine_distance(vt, dec.envelopes.values)};
        ok[i] = true;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.push_back(wavs[i].filename().string() + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < width; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::vector<lfm::SoundMetrics> good;
  for (std::size_t i = 0; i < wavs.size(); ++i)
    if (ok[i]) good.push_back(metrics[i]);
  for (const std::string& f : failures) std::cerr << "evaluate: excluded " << f << "\n";
  if (good.empty()) throw std::runtime_error("evaluate: every sound failed");

  const lfm::RelativeReport rep = lfm::relative_report(good);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_path);
  os << "sound,method,metric,value,ratio_to_nmf\n";
  for (const auto& row : rep.rows) {
    os << row.sound << ',' << row.method << ',' << row.metric << ',' << row.value << ',';
    if (row.ratio_valid) os << row.ratio_to_nmf;
    os << "\n";
  }
  os << "summary,method,metric,median,q1,q3\n";
  for (const auto& s : rep.summary)
    os << "summary," << s.method << ',' << s.metric << ',' << s.median << ',' << s.q1 << ','
       << s.q3 << "\n";

  std::cout << "method   metric   median   q1       q3      (ratio vs NMF)\n";
  for (const auto& s : rep.summary)
    std::printf("%-8s %-8s %-8.4f %-8.4f %-8.4f\n", s.method.c_str(), s.metric.c_str(),
                s.median, s.q1, s.q3);
  for (const std::string& e : rep.excluded)
    std::cout << "excluded from summary (zero NMF metric): " << e << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent force modelling of natural sounds"};
  app.require_subcommand(1);

  std::string config_path;

  auto* dec = app.add_subcommand("decompose", "Split a WAV into subband envelopes and carriers");
  std::string dec_input, dec_out = ".";
  dec->add_option("input", dec_input, "input WAV")->required();
  dec->add_option("--out-dir", dec_out, "output directory");
  dec->add_option("--config", config_path, "config JSON");
  auto* channels = dec->add_option("--channels", "filterbank channels")->check(CLI::Range(2, 64));
  auto* f_lo = dec->add_option("--f-lo", "lowest center frequency, Hz")->check(CLI::PositiveNumber);
  auto* f_hi = dec->add_option("--f-hi", "highest center frequency, Hz")->check(CLI::PositiveNumber);
  auto* ls = dec->add_option("--lengthscale-ms", "demodulation lengthscale, ms")
                 ->check(CLI::Range(10.0, 10000.0));
  auto* decim =
      dec->add_option("--decimation", "envelope decimation factor")->check(CLI::Range(1, 1000));

  auto* train = app.add_subcommand("train", "Fit the latent force model to envelope data");
  std::string train_env, train_carriers, train_fb, train_out = ".";
  train->add_option("envelopes", train_env, "envelopes.csv from decompose")->required();
  train->add_option("--carriers", train_carriers, "carriers.csv (default: sibling file)");
  train->add_option("--filterbank", train_fb, "fb.json (default: sibling file)");
  train->add_option("--out-dir", train_out, "output directory");
  train->add_option("--config", config_path, "config JSON");
  auto* forces = train->add_option("--forces", "latent force count (0 = choose by BIC)")
                     ->check(CLI::Range(0, 8));
  auto* history = train->add_option("--history", "history length P")->check(CLI::Range(0, 64));
  auto* iters = train->add_option("--iters", "max optimizer iterations per stage")
                    ->check(CLI::PositiveNumber);
  auto* seed_opt = train->add_option("--seed", "training seed")->check(CLI::NonNegativeNumber);

  auto* rec = app.add_subcommand("reconstruct", "Reconstruct envelopes through the model");
  std::string rec_model, rec_env, rec_out = ".";
  rec->add_option("model", rec_model, "model.json")->required();
  rec->add_option("envelopes", rec_env, "envelopes.csv")->required();
  rec->add_option("--out-dir", rec_out, "output directory");

  auto* sample = app.add_subcommand("sample", "Generate a novel sound from a model");
  std::string sample_model, sample_out = "out.wav";
  double sample_duration = 2.0;
  std::uint64_t sample_seed = 0;
  sample->add_option("model", sample_model, "model.json")->required();
  sample->add_option("--duration", sample_duration, "seconds")->check(CLI::Range(0.01, 600.0));
  sample->add_option("--seed", sample_seed, "sampling seed");
  sample->add_option("--out", sample_out, "output WAV path");

  auto* eval = app.add_subcommand("evaluate", "LFM vs NMF/tNMF reconstruction report");
  std::string eval_dir, eval_out = "report.csv";
  eval->add_option("sound_dir", eval_dir, "directory of WAV files")->required();
  eval->add_option("--out", eval_out, "report CSV path");
  eval->add_option("--config", config_path, "config JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    lfm::PipelineConfig cfg =
        lfm::load_config(config_path.empty() ? fs::path() : fs::path(config_path));
    if (app.got_subcommand(dec)) {
      if (*channels) cfg.front.channels = channels->as<int>();
      if (*f_lo) cfg.front.f_lo = f_lo->as<double>();
      if (*f_hi) cfg.front.f_hi = f_hi->as<double>();
      if (*ls) cfg.front.lengthscale_ms = ls->as<double>();
      if (*decim) cfg.front.decimation = decim->as<int>();
      return run_decompose(dec_input, dec_out, cfg);
    }
    if (app.got_subcommand(train)) {
      if (*forces) cfg.train.forces = forces->as<int>();
      if (*history) cfg.train.history = history->as<int>();
      if (*iters) cfg.train.max_iters = iters->as<int>();
      if (*seed_opt) cfg.train.seed = seed_opt->as<std::uint64_t>();
      return run_train(train_env, train_carriers, train_fb, train_out, cfg);
    }
    if (app.got_subcommand(rec)) return run_reconstruct(rec_model, rec_env, rec_out);
    if (app.got_subcommand(sample))
      return run_sample(sample_model, sample_duration, sample_seed, sample_out);
    if (app.got_subcommand(eval)) return run_evaluate(eval_dir, eval_out, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
