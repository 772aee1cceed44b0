#include "lfm/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lfm {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

float read_f32(const unsigned char* p) {
  std::uint32_t bits = read_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* hdr = p + pos;
    std::uint32_t chunk_size = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_size > size) chunk_size = std::uint32_t(size - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_size >= 16) {
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_size = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr)
    throw std::runtime_error("WAV missing fmt/data chunk: " + path.string());
  if (channels == 0 || rate == 0)
    throw std::runtime_error("WAV has invalid fmt chunk: " + path.string());

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw std::runtime_error("unsupported WAV encoding (need PCM16 or float32): " +
                             path.string());

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw std::runtime_error("zero-length audio: " + path.string());

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* sp = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        std::int16_t v = static_cast<std::int16_t>(read_u16(sp));
        acc += v / 32768.0;
      } else {
        acc += read_f32(sp);
      }
    }
    out.samples[i] = acc / channels;
  }
  for (double s : out.samples)
    if (!std::isfinite(s)) throw std::runtime_error("non-finite samples in " + path.string());
  return out;
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
  if (buffer.samples.empty()) throw std::invalid_argument("write_wav: empty buffer");
  if (buffer.sample_rate <= 0) throw std::invalid_argument("write_wav: sample_rate must be > 0");
  for (double s : buffer.samples)
    if (!std::isfinite(s)) throw std::invalid_argument("write_wav: non-finite sample");

  const std::uint32_t n = static_cast<std::uint32_t>(buffer.samples.size());
  const std::uint32_t data_bytes = n * 4;
  std::string out;
  out.reserve(58 + data_bytes);
  out += "RIFF";
  put_u32(out, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 18);
  put_u16(out, 3);  // IEEE float
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_u16(out, 0);  // cbSize
  out += "fact";
  put_u32(out, 4);
  put_u32(out, n);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : buffer.samples) {
    float f = static_cast<float>(s);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32(out, bits);
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("short write: " + path.string());
}

AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target_rate must be > 0");
  if (buffer.sample_rate <= 0) throw std::invalid_argument("resample: source rate must be > 0");
  if (target_rate == buffer.sample_rate) return buffer;

  const std::size_t n = buffer.samples.size();
  const double ratio = static_cast<double>(target_rate) / buffer.sample_rate;
  const std::size_t out_len = std::max<std::size_t>(1, std::llround(double(n) * ratio));
  const double rho = std::min(1.0, ratio);  // anti-alias cutoff for downsampling
  const int zero_crossings = 32;
  const double half_width = zero_crossings / rho;  // support in input samples

  auto kernel = [&](double tau) {
    double x = rho * tau;
    double s = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    double w = x / zero_crossings;  // in [-1, 1]
    double win = 0.42 + 0.5 * std::cos(kPi * w) + 0.08 * std::cos(2.0 * kPi * w);
    return s * win;
  };

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double t = j / ratio;
    const long i0 = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
    const long i1 = std::min<long>(static_cast<long>(n) - 1,
                                   static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0, wsum = 0.0;
    for (long i = i0; i <= i1; ++i) {
      double w = kernel(i - t);
      acc += w * buffer.samples[static_cast<std::size_t>(i)];
      wsum += w;
    }
    out.samples[j] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

void write_matrix_csv(const Eigen::MatrixXd& values, double frame_rate,
                      const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", frame_rate);
  os << "# channels=" << values.rows() << " frames=" << values.cols()
     << " frame_rate=" << buf << "\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values(r, c));
      os << buf;
      if (c + 1 < values.cols()) os << ',';
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("short write: " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, double* frame_rate) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open CSV: " + path.string());
  std::string header;
  if (!std::getline(is, header))
    throw std::runtime_error(path.string() + ":1: empty CSV file");

  long channels = -1, frames = -1;
  double rate = 0.0;
  if (std::sscanf(header.c_str(), "# channels=%ld frames=%ld frame_rate=%lf", &channels,
                  &frames, &rate) != 3 ||
      channels < 1 || frames < 1)
    throw std::runtime_error(path.string() + ":1: malformed header, expected "
                             "'# channels=M frames=T frame_rate=R'");

  Eigen::MatrixXd values(channels, frames);
  std::string line;
  for (long r = 0; r < channels; ++r) {
    if (!std::getline(is, line))
      throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) +
                               ": missing row " + std::to_string(r));
    std::stringstream ss(line);
    std::string cell;
    for (long c = 0; c < frames; ++c) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) + ": row " +
                                 std::to_string(r) + " has fewer than " +
                                 std::to_string(frames) + " columns");
      try {
        std::size_t used = 0;
        values(r, c) = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) +
                                 ": bad number in column " + std::to_string(c));
      }
    }
  }
  if (frame_rate) *frame_rate = rate;
  return values;
}

void write_envelope_csv(const EnvelopeMatrix& env, const std::filesystem::path& path) {
  write_matrix_csv(env.values, env.frame_rate, path);
}

EnvelopeMatrix read_envelope_csv(const std::filesystem::path& path) {
  EnvelopeMatrix env;
  env.values = read_matrix_csv(path, &env.frame_rate);
  env.channel_freqs.resize(static_cast<std::size_t>(env.values.rows()));
  for (std::size_t m = 0; m < env.channel_freqs.size(); ++m)
    env.channel_freqs[m] = static_cast<double>(m + 1);
  return env;
}

}  // namespace lfm
