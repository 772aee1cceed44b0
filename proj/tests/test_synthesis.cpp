#include "lfm/synthesis.hpp"

#include <doctest.h>

#include "lfm/demod.hpp"
#include "test_support.hpp"

using namespace lfm;

namespace {

LfmParams two_channel_params() {
  LfmParams p;
  p.damping = Eigen::Vector2d(5.0, 10.0);
  p.gamma = Eigen::Vector2d(1.0, 1.0);
  p.feedback = Eigen::MatrixXd::Zero(2, 0);
  p.sensitivity.assign(1, (Eigen::MatrixXd(2, 1) << 2.0, 3.0).finished());
  p.kernels = {KernelParams{0.1, 1.0}};
  p.sigma2 = 1e-3;
  p.active_lags = {0};
  return p;
}

}  // namespace

TEST_CASE("fit_modulator: constant latents give a zero-variance modulator") {
  const Eigen::MatrixXd latents = Eigen::MatrixXd::Constant(2, 800, 1.5);
  const ModulatorModel mod = fit_modulator(latents, 1600.0);
  CHECK(mod.se_variance == doctest::Approx(0.0));

  // sampled latents are then exactly the raw GP draws scaled by exp(mean)
  const LfmParams p = two_channel_params();
  ModulatorModel unit = mod;
  unit.mean_offset = 0.0;
  const Eigen::MatrixXd raw = sample_latents(p, unit, 400, 1600.0, 5);
  ModulatorModel scaled = mod;
  scaled.mean_offset = std::log(3.0);
  const Eigen::MatrixXd tripled = sample_latents(p, scaled, 400, 1600.0, 5);
  CHECK((tripled - 3.0 * raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_modulator: two well-separated bursts bound the lengthscale") {
  const double frame_rate = 1600.0;
  const int frames = 3200;  // 2 s
  Eigen::MatrixXd latents = Eigen::MatrixXd::Zero(1, frames);
  for (int t = 0; t < frames; ++t) {
    const double time = t / frame_rate;
    const double b1 = std::exp(-0.5 * std::pow((time - 0.5) / 0.06, 2));
    const double b2 = std::exp(-0.5 * std::pow((time - 1.5) / 0.06, 2));
    latents(0, t) = 3.0 * (b1 + b2) + 0.01 * std::sin(311.0 * t);
  }
  const ModulatorModel mod = fit_modulator(latents, frame_rate);
  CHECK(mod.se_variance > 0.0);
  CHECK(mod.se_lengthscale < 1.0);  // bursts are 1 s apart

  const ModulatorModel again = fit_modulator(latents, frame_rate);
  CHECK(again.se_lengthscale == mod.se_lengthscale);
  CHECK(again.se_variance == mod.se_variance);
  CHECK(again.mean_offset == mod.mean_offset);
}

TEST_CASE("sample_latents: determinism and modulator-induced sparsity") {
  const LfmParams p = two_channel_params();
  ModulatorModel flat;
  flat.se_variance = 0.0;
  flat.mean_offset = 0.0;
  const int frames = 4000;

  const Eigen::MatrixXd a = sample_latents(p, flat, frames, 1600.0, 9);
  const Eigen::MatrixXd b = sample_latents(p, flat, frames, 1600.0, 9);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd c = sample_latents(p, flat, frames, 1600.0, 10);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);

  ModulatorModel bursty;
  bursty.se_variance = 4.0;
  bursty.se_lengthscale = 0.2;
  bursty.mean_offset = -2.0;
  const Eigen::MatrixXd gated = sample_latents(p, bursty, frames, 1600.0, 9);

  const auto small_fraction = [](const Eigen::MatrixXd& m) {
    const double cutoff = 0.1 * m.cwiseAbs().maxCoeff();
    return static_cast<double>((m.cwiseAbs().array() < cutoff).count()) /
           static_cast<double>(m.size());
  };
  CHECK(small_fraction(gated) > small_fraction(a));
}

TEST_CASE("generate_envelopes: decay to zero under strongly negative latents") {
  const LfmParams p = two_channel_params();
  const StateLayout layout = build_layout(2, 1, 0, kLatentDim);
  const Eigen::MatrixXd latents = Eigen::MatrixXd::Constant(1, 4000, -40.0);
  const Eigen::Vector2d x0(1.0, 0.5);
  const EnvelopeMatrix env =
      generate_envelopes(p, layout, latents, 1600.0, {100.0, 500.0}, x0);
  for (int m = 0; m < 2; ++m) {
    for (int t = 1; t < env.frames(); ++t)
      CHECK(env.values(m, t) <= env.values(m, t - 1) + 1e-15);
    CHECK(env.values(m, env.frames() - 1) < 1e-3);
  }
}

TEST_CASE("generate_envelopes: steady state S*g(u)/D under a step input") {
  const LfmParams p = two_channel_params();
  const StateLayout layout = build_layout(2, 1, 0, kLatentDim);
  const double dt = 1.0 / 1600.0;
  const double u = 1.3;
  const int settle = static_cast<int>(std::ceil(5.0 / (5.0 * dt)));  // slowest channel
  const Eigen::MatrixXd latents = Eigen::MatrixXd::Constant(1, settle + 50, u);
  const EnvelopeMatrix env =
      generate_envelopes(p, layout, latents, 1600.0, {100.0, 500.0});
  for (int m = 0; m < 2; ++m) {
    const double target = p.sensitivity[0](m, 0) * softplus(u) / p.damping[m];
    CHECK(std::abs(env.values(m, settle) - target) <= 0.02 * target);
  }

  // doubling the sensitivity doubles the fixed point in the linear regime
  LfmParams doubled = p;
  doubled.sensitivity[0] *= 2.0;
  const EnvelopeMatrix env2 =
      generate_envelopes(doubled, layout, latents, 1600.0, {100.0, 500.0});
  CHECK(env2.values(0, settle) == doctest::Approx(2.0 * env.values(0, settle)).epsilon(1e-10));
}

TEST_CASE("generate_envelopes: instability is reported with the frame index") {
  LfmParams p = two_channel_params();
  const StateLayout layout = build_layout(2, 1, 0, kLatentDim);
  p.damping = Eigen::Vector2d(-4000.0, 5.0);  // negative damping blows up
  const Eigen::MatrixXd latents = Eigen::MatrixXd::Constant(1, 4000, 1.0);
  Eigen::Vector2d x0(1.0, 1.0);
  try {
    generate_envelopes(p, layout, latents, 1600.0, {100.0, 500.0}, x0);
    FAIL("expected instability error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("frame") != std::string::npos);
  }
}

TEST_CASE("fit_carriers: sine vs noise carriers") {
  const ErbFilterbank fb = design_filterbank(100.0, 2000.0, 8, 16000);
  const int n = 16000;
  const int probe = 3;  // center near 400 Hz
  SubbandSet set;
  set.fb = fb;
  set.subbands = Eigen::MatrixXd::Zero(8, n);

  EnvelopeMatrix env;
  env.frame_rate = 1600.0;
  env.channel_freqs = fb.center_freqs;
  env.values = Eigen::MatrixXd::Constant(8, n / 10, 1.0);

  SUBCASE("pure sine concentrates in the 3% window") {
    const double fc = fb.center_freqs[static_cast<std::size_t>(probe)];
    for (int i = 0; i < n; ++i)
      set.subbands(probe, i) = std::sin(2.0 * std::numbers::pi * fc * i / 16000.0);
    const CarrierModel cm = fit_carriers(set, env);
    const CarrierChannel& ch = cm.channels[static_cast<std::size_t>(probe)];
    CHECK(ch.sinusoid_freq == doctest::Approx(fc).epsilon(0.01));
    CHECK(ch.sinusoid_power / std::max(ch.noise_power, 1e-300) > 10.0);
    CHECK(ch.sinusoid_freq >= fc - fb.bandwidths[static_cast<std::size_t>(probe)]);
    CHECK(ch.sinusoid_freq <= fc + fb.bandwidths[static_cast<std::size_t>(probe)]);
  }

  SUBCASE("band-filtered noise stays mostly outside the window") {
    lfm::AudioBuffer noise = lfmtest::white_noise(n, 16000, 17);
    const std::vector<double> filtered = bandpass_zero_phase(fb, probe, noise.samples);
    for (int i = 0; i < n; ++i) set.subbands(probe, i) = filtered[static_cast<std::size_t>(i)];
    const CarrierModel cm = fit_carriers(set, env);
    const CarrierChannel& ch = cm.channels[static_cast<std::size_t>(probe)];
    CHECK(ch.sinusoid_power / std::max(ch.noise_power, 1e-300) < 1.0);
  }

  SUBCASE("zero carrier has zero powers") {
    const CarrierModel cm = fit_carriers(set, env);
    CHECK(cm.channels[2].sinusoid_power == 0.0);
    CHECK(cm.channels[2].noise_power == 0.0);
  }
}

TEST_CASE("render: silence, determinism, peak normalization, envelope tracking") {
  const int channels = 12;
  const ErbFilterbank fb = design_filterbank(200.0, 4000.0, channels, 16000);
  const double frame_rate = 1600.0;
  const int frames = 3200;  // 2 s

  CarrierModel cm;
  cm.channels.resize(channels);
  for (int m = 0; m < channels; ++m) {
    cm.channels[static_cast<std::size_t>(m)].sinusoid_freq = fb.center_freqs[static_cast<std::size_t>(m)];
    cm.channels[static_cast<std::size_t>(m)].sinusoid_power = 0.6;
    cm.channels[static_cast<std::size_t>(m)].noise_power = 0.4;
  }

  EnvelopeMatrix env;
  env.frame_rate = frame_rate;
  env.channel_freqs = fb.center_freqs;
  env.values.resize(channels, frames);
  for (int m = 0; m < channels; ++m)
    for (int t = 0; t < frames; ++t) {
      const double time = t / frame_rate;
      env.values(m, t) =
          0.2 + std::exp(-0.5 * std::pow((time - 0.4 - 0.1 * m) / 0.15, 2));
    }

  SUBCASE("all-zero envelopes render silence") {
    EnvelopeMatrix zero = env;
    zero.values.setZero();
    const AudioBuffer out = render(zero, cm, fb, 3);
    for (double v : out.samples) CHECK(v == 0.0);
  }

  const AudioBuffer out = render(env, cm, fb, 3);
  REQUIRE(out.samples.size() == static_cast<std::size_t>(frames * 10));

  SUBCASE("deterministic per seed") {
    const AudioBuffer again = render(env, cm, fb, 3);
    CHECK(out.samples == again.samples);
    const AudioBuffer other = render(env, cm, fb, 4);
    CHECK(out.samples != other.samples);
  }

  SUBCASE("finite and peak-normalized to 0.9") {
    double peak = 0.0;
    for (double v : out.samples) {
      CHECK(std::isfinite(v));
      peak = std::max(peak, std::abs(v));
    }
    CHECK(peak == doctest::Approx(0.9).epsilon(1e-12));
  }

  SUBCASE("subband envelopes of the output track the supplied envelopes") {
    const SubbandSet analyzed = analyze(out, fb);
    for (int m = 0; m < channels; ++m) {
      const Eigen::RowVectorXd row = analyzed.subbands.row(m);
      const DemodResult d = demodulate(
          std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), 20.0,
          16000.0, 10);
      const Eigen::Map<const Eigen::VectorXd> recovered(d.envelope_frames.data(),
                                                        static_cast<Eigen::Index>(d.envelope_frames.size()));
      const Eigen::VectorXd supplied = env.values.row(m).transpose();
      std::span<const double> a(recovered.data(), static_cast<std::size_t>(frames));
      std::span<const double> b(supplied.data(), static_cast<std::size_t>(frames));
      CHECK(lfmtest::correlation(a, b) > 0.9);
    }
  }
}
