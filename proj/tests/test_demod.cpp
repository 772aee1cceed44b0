#include "lfm/demod.hpp"

#include <doctest.h>

#include "test_support.hpp"

using namespace lfm;

namespace {

double total_variation(const std::vector<double>& x) {
  double tv = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) tv += std::abs(x[i] - x[i - 1]);
  return tv;
}

// AM signal with a known slow modulator: the oracle for envelope recovery.
struct AmSignal {
  std::vector<double> signal;
  std::vector<double> modulator;
};

AmSignal make_am(double carrier_hz, double mod_hz, double seconds, int fs) {
  AmSignal out;
  const auto n = static_cast<std::size_t>(seconds * fs);
  out.signal.resize(n);
  out.modulator.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    out.modulator[i] = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * mod_hz * t);
    out.signal[i] =
        out.modulator[i] * std::sin(2.0 * std::numbers::pi * carrier_hz * t);
  }
  return out;
}

}  // namespace

TEST_CASE("envelope_frame_grid is ceil division") {
  CHECK(envelope_frame_grid(1000, 10) == 100);
  CHECK(envelope_frame_grid(1001, 10) == 101);
  CHECK(envelope_frame_grid(88200, 10) == 8820);
  CHECK_THROWS(envelope_frame_grid(100, 0));
}

TEST_CASE("constant signal: envelope is the amplitude, carrier is +1") {
  std::vector<double> x(4000, 0.8);
  const DemodResult d = demodulate(x, 20.0, 16000.0, 10);
  for (std::size_t i = 0; i < x.size(); i += 97) {
    CHECK(d.envelope[i] == doctest::Approx(0.8).epsilon(0.01));
    CHECK(d.carrier[i] == doctest::Approx(1.0).epsilon(0.01));
  }
  CHECK(d.envelope_frames.size() == 400);
}

TEST_CASE("known AM modulator is recovered within 5% NRMSE") {
  const AmSignal am = make_am(1000.0, 2.0, 1.0, 16000);
  const DemodResult d = demodulate(am.signal, 10.0, 16000.0, 1);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < am.signal.size(); ++i) {
    err += (d.envelope[i] - am.modulator[i]) * (d.envelope[i] - am.modulator[i]);
    ref += am.modulator[i] * am.modulator[i];
  }
  CHECK(std::sqrt(err / ref) < 0.05);
}

TEST_CASE("zero signal: envelope at the floor, carrier zero") {
  std::vector<double> x(2000, 0.0);
  const DemodResult d = demodulate(x, 20.0, 16000.0, 10);
  for (double e : d.envelope) CHECK(e == doctest::Approx(d.floor));
  for (double c : d.carrier) CHECK(c == 0.0);
  CHECK(d.floor == doctest::Approx(1e-8));
}

TEST_CASE("reconstruction identity: envelope x carrier = subband exactly") {
  const AmSignal am = make_am(800.0, 3.0, 0.5, 16000);
  const DemodResult d = demodulate(am.signal, 20.0, 16000.0, 10);
  double worst = 0.0;
  for (std::size_t i = 0; i < am.signal.size(); ++i) {
    const double recon = d.envelope[i] * d.carrier[i];
    worst = std::max(worst, std::abs(recon - am.signal[i]));
  }
  CHECK(worst < 1e-12);  // relative to |signal| <= 1
}

TEST_CASE("positivity: envelope never drops below the floor") {
  lfm::AudioBuffer noise = lfmtest::white_noise(6000, 16000, 3);
  // silence the middle
  for (std::size_t i = 2000; i < 4000; ++i) noise.samples[i] = 0.0;
  const DemodResult d = demodulate(noise.samples, 15.0, 16000.0, 10);
  for (double e : d.envelope) CHECK(e >= d.floor);
  for (double e : d.envelope_frames) CHECK(e >= d.floor);
}

TEST_CASE("larger lengthscale never raises the envelope's total variation") {
  const AmSignal am = make_am(600.0, 5.0, 0.75, 16000);
  double prev = std::numeric_limits<double>::infinity();
  for (double ls : {10.0, 30.0, 90.0}) {
    const DemodResult d = demodulate(am.signal, ls, 16000.0, 10);
    const double tv = total_variation(d.envelope_frames);
    CHECK(tv <= prev * (1.0 + 1e-9));
    prev = tv;
  }
}

TEST_CASE("frame-to-frame envelope increments respect the smoothness bound") {
  const AmSignal am = make_am(900.0, 4.0, 0.5, 16000);
  const double ls_ms = 20.0;
  const std::size_t dec = 10;
  const DemodResult d = demodulate(am.signal, ls_ms, 16000.0, dec);
  const double frame_period_ms = 1000.0 * dec / 16000.0;
  double max_env = 0.0;
  for (double e : d.envelope_frames) max_env = std::max(max_env, e);
  const double bound = (frame_period_ms / ls_ms) * max_env * 3.0;
  for (std::size_t t = 1; t < d.envelope_frames.size(); ++t)
    CHECK(std::abs(d.envelope_frames[t] - d.envelope_frames[t - 1]) <= bound);
}

TEST_CASE("preconditions") {
  std::vector<double> empty;
  CHECK_THROWS(demodulate(empty, 20.0, 16000.0, 10));
  std::vector<double> x(100, 1.0);
  CHECK_THROWS(demodulate(x, 5.0, 16000.0, 10));  // lengthscale below 10 ms
}
