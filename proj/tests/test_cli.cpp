// End-to-end checks of the lfmsynth binary. The binary path arrives through
// the LFMSYNTH_BIN environment variable set by CTest.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "lfm/audio_io.hpp"
#include "lfm/model_file.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string binary() {
  const char* bin = std::getenv("LFMSYNTH_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "LFMSYNTH_BIN must point at the lfmsynth binary");
  return bin;
}

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "lfm_cli_test";
  fs::create_directories(dir);
  return dir;
}

// A short burst-train recording: tonal bursts over a noise floor, enough
// structure for a quick 3-channel model fit.
lfm::AudioBuffer make_test_sound() {
  const int fs = 16000;
  const int n = fs;  // 1 s
  lfm::AudioBuffer b;
  b.sample_rate = fs;
  b.samples.resize(static_cast<std::size_t>(n));
  lfm::Rng rng(99);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double env = 0.02;
    for (double onset : {0.1, 0.45, 0.75})
      if (t >= onset) env += 0.9 * std::exp(-10.0 * (t - onset));
    const double tone = std::sin(2.0 * std::numbers::pi * 500.0 * t) +
                        0.6 * std::sin(2.0 * std::numbers::pi * 1900.0 * t);
    b.samples[static_cast<std::size_t>(i)] = env * (0.7 * tone + 0.2 * rng.gaussian());
  }
  return b;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(bool(is));
  json j;
  is >> j;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("pipeline: decompose, train, reconstruct, sample, evaluate") {
  const fs::path dir = work_dir();
  fs::remove_all(dir);
  fs::create_directories(dir / "sounds");
  lfm::write_wav(make_test_sound(), dir / "sounds" / "burst.wav");

  // fast configuration for the tiny fixture
  {
    json cfg;
    cfg["channels"] = 3;
    cfg["f_lo"] = 300.0;
    cfg["f_hi"] = 2500.0;
    cfg["forces"] = 1;
    cfg["history"] = 2;
    cfg["max_iters"] = 6;
    cfg["stage1_channels"] = 3;
    cfg["nmf_iters"] = 100;
    std::ofstream(dir / "config.json") << cfg.dump();
  }

  SUBCASE("missing input file exits nonzero") {
    CHECK(run("decompose " + (dir / "nope.wav").string()) == 1);
  }

  REQUIRE(run("decompose " + (dir / "sounds" / "burst.wav").string() + " --out-dir " +
              (dir / "dec").string() + " --config " + (dir / "config.json").string()) == 0);
  CHECK(fs::exists(dir / "dec" / "envelopes.csv"));
  CHECK(fs::exists(dir / "dec" / "carriers.csv"));
  CHECK(fs::exists(dir / "dec" / "fb.json"));

  const lfm::EnvelopeMatrix env = lfm::read_envelope_csv(dir / "dec" / "envelopes.csv");
  CHECK(env.channels() == 3);
  CHECK(env.frames() == 1600);  // 1 s at 16 kHz, decimation 10
  CHECK(env.frame_rate == 1600.0);
  CHECK(env.values.minCoeff() >= 0.0);

  SUBCASE("malformed envelope CSV exits 1") {
    std::ofstream(dir / "bad.csv") << "# channels=2 frames=2 frame_rate=1600\n1,2\n3,oops\n";
    CHECK(run("train " + (dir / "bad.csv").string()) == 1);
  }

  const int train_rc = run("train " + (dir / "dec" / "envelopes.csv").string() +
                           " --out-dir " + (dir / "model").string() + " --config " +
                           (dir / "config.json").string());
  REQUIRE((train_rc == 0 || train_rc == 2));  // 2 = iteration cap warning
  REQUIRE(fs::exists(dir / "model" / "model.json"));
  REQUIRE(fs::exists(dir / "model" / "report.json"));

  SUBCASE("training is byte-identical on rerun") {
    const std::string first = slurp(dir / "model" / "model.json");
    REQUIRE(run("train " + (dir / "dec" / "envelopes.csv").string() + " --out-dir " +
                (dir / "model2").string() + " --config " + (dir / "config.json").string()) ==
            train_rc);
    CHECK(slurp(dir / "model2" / "model.json") == first);
  }

  SUBCASE("reconstruct writes recon.csv and the two metrics") {
    REQUIRE(run("reconstruct " + (dir / "model" / "model.json").string() + " " +
                (dir / "dec" / "envelopes.csv").string() + " --out-dir " +
                (dir / "rec").string()) == 0);
    const json metrics = read_json(dir / "rec" / "metrics.json");
    CHECK(metrics.size() == 2);
    CHECK(metrics.contains("rms"));
    CHECK(metrics.contains("cosine"));
    CHECK(metrics["rms"].get<double>() >= 0.0);
    const lfm::EnvelopeMatrix rec = lfm::read_envelope_csv(dir / "rec" / "recon.csv");
    CHECK(rec.channels() == 3);
    CHECK(rec.frames() == env.frames());

    // mismatched channel count
    std::ofstream(dir / "tiny.csv") << "# channels=1 frames=2 frame_rate=1600\n1,2\n";
    CHECK(run("reconstruct " + (dir / "model" / "model.json").string() + " " +
              (dir / "tiny.csv").string()) == 1);
  }

  SUBCASE("sample: duration, determinism, seed sensitivity") {
    const std::string model = (dir / "model" / "model.json").string();
    REQUIRE(run("sample " + model + " --duration 2.0 --seed 11 --out " +
                (dir / "a.wav").string()) == 0);
    const lfm::AudioBuffer a = lfm::read_wav(dir / "a.wav");
    CHECK(std::llabs(static_cast<long long>(a.samples.size()) - 32000) <= 10);
    double peak = 0.0;
    for (double v : a.samples) {
      REQUIRE(std::isfinite(v));
      peak = std::max(peak, std::abs(v));
    }
    CHECK(peak <= 0.9 + 1e-9);

    REQUIRE(run("sample " + model + " --duration 2.0 --seed 11 --out " +
                (dir / "b.wav").string()) == 0);
    CHECK(lfm::file_hash_hex(dir / "a.wav") == lfm::file_hash_hex(dir / "b.wav"));

    REQUIRE(run("sample " + model + " --duration 2.0 --seed 12 --out " +
                (dir / "c.wav").string()) == 0);
    const lfm::AudioBuffer c = lfm::read_wav(dir / "c.wav");
    std::span<const double> sa(a.samples.data(), a.samples.size());
    std::span<const double> sc(c.samples.data(), c.samples.size());
    CHECK(lfmtest::correlation(sa, sc) < 0.9);

    const json manifest = read_json(dir / "a.manifest.json");
    CHECK(manifest["seed"].get<std::uint64_t>() == 11);
    CHECK(manifest["duration"].get<double>() == 2.0);
    CHECK(manifest["model_hash"].get<std::string>() ==
          lfm::file_hash_hex(dir / "model" / "model.json"));
  }

  SUBCASE("invalid numeric flags are rejected with an explicit message") {
    CHECK(run("sample " + (dir / "model" / "model.json").string() + " --duration -1") != 0);
    CHECK(run("decompose " + (dir / "sounds" / "burst.wav").string() + " --channels 1") != 0);
    CHECK(run("decompose " + (dir / "sounds" / "burst.wav").string() +
              " --lengthscale-ms 2") != 0);
  }

  SUBCASE("evaluate: empty directory fails, corrupt file is excluded") {
    fs::create_directories(dir / "empty");
    CHECK(run("evaluate " + (dir / "empty").string()) == 1);

    std::ofstream(dir / "sounds" / "corrupt.wav") << "zzz";
    REQUIRE(run("evaluate " + (dir / "sounds").string() + " --out " +
                (dir / "report.csv").string() + " --config " +
                (dir / "config.json").string()) == 0);
    const std::string report = slurp(dir / "report.csv");
    CHECK(report.find("burst,lfm,rms") != std::string::npos);
    CHECK(report.find("burst,tnmf,cosine") != std::string::npos);
    CHECK(report.find("burst,nmf,rms") != std::string::npos);
    CHECK(report.find("summary,lfm,rms") != std::string::npos);
    CHECK(report.find("corrupt") == std::string::npos);
  }
}
