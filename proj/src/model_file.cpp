#include "lfm/model_file.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace lfm {
namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_hint = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = cols_hint;
  if (rows > 0) cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

}  // namespace

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  json j;
  j["version"] = model.version;
  j["filterbank"] = {
      {"sample_rate", model.filterbank.sample_rate},
      {"filter_order", model.filterbank.filter_order},
      {"bandwidth_scale", model.filterbank.bandwidth_scale},
      {"center_freqs", model.filterbank.center_freqs},
      {"bandwidths", model.filterbank.bandwidths},
      {"gains", model.filterbank.gains},
  };
  j["demod"] = {{"lengthscale_ms", model.demod.lengthscale_ms},
                {"decimation", model.demod.decimation}};
  json kernels = json::array();
  for (const KernelParams& k : model.params.kernels)
    kernels.push_back({{"lengthscale", k.lengthscale}, {"variance", k.variance}});
  json sensitivity = json::array();
  for (const auto& s : model.params.sensitivity) sensitivity.push_back(matrix_to_json(s));
  j["params"] = {
      {"damping", vector_to_json(model.params.damping)},
      {"gamma", vector_to_json(model.params.gamma)},
      {"feedback", matrix_to_json(model.params.feedback)},
      {"sensitivity", sensitivity},
      {"kernels", kernels},
      {"sigma2", model.params.sigma2},
      {"active_feedback", model.params.active_feedback},
      {"active_lags", model.params.active_lags},
  };
  j["layout"] = {{"M", model.layout.M}, {"R", model.layout.R}, {"P", model.layout.P},
                 {"d", model.layout.d}};
  json carriers = json::array();
  for (const CarrierChannel& c : model.carriers.channels)
    carriers.push_back({{"sinusoid_freq", c.sinusoid_freq},
                        {"sinusoid_power", c.sinusoid_power},
                        {"noise_power", c.noise_power}});
  j["carriers"] = carriers;
  j["modulator"] = {{"se_lengthscale", model.modulator.se_lengthscale},
                    {"se_variance", model.modulator.se_variance},
                    {"mean_offset", model.modulator.mean_offset}};
  j["training"] = {{"config_hash", model.config_hash}, {"loglik", model.train_loglik}};

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("short write: " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open model: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed model JSON in " + path.string() + ": " + e.what());
  }

  ModelFile m;
  try {
    m.version = j.at("version").get<std::string>();
    const json& fb = j.at("filterbank");
    m.filterbank.sample_rate = fb.at("sample_rate").get<int>();
    m.filterbank.filter_order = fb.at("filter_order").get<int>();
    m.filterbank.bandwidth_scale = fb.at("bandwidth_scale").get<double>();
    m.filterbank.center_freqs = fb.at("center_freqs").get<std::vector<double>>();
    m.filterbank.bandwidths = fb.at("bandwidths").get<std::vector<double>>();
    m.filterbank.gains = fb.at("gains").get<std::vector<double>>();
    m.demod.lengthscale_ms = j.at("demod").at("lengthscale_ms").get<double>();
    m.demod.decimation = j.at("demod").at("decimation").get<int>();

    const json& p = j.at("params");
    m.params.damping = vector_from_json(p.at("damping"));
    m.params.gamma = vector_from_json(p.at("gamma"));
    m.params.feedback = matrix_from_json(p.at("feedback"));
    for (const json& s : p.at("sensitivity")) m.params.sensitivity.push_back(matrix_from_json(s));
    for (const json& k : p.at("kernels"))
      m.params.kernels.push_back(
          {k.at("lengthscale").get<double>(), k.at("variance").get<double>()});
    m.params.sigma2 = p.at("sigma2").get<double>();
    m.params.active_feedback = p.at("active_feedback").get<std::vector<int>>();
    m.params.active_lags = p.at("active_lags").get<std::vector<int>>();

    const json& layout = j.at("layout");
    m.layout = build_layout(layout.at("M").get<int>(), layout.at("R").get<int>(),
                            layout.at("P").get<int>(), layout.at("d").get<int>());
    for (const json& c : j.at("carriers"))
      m.carriers.channels.push_back({c.at("sinusoid_freq").get<double>(),
                                     c.at("sinusoid_power").get<double>(),
                                     c.at("noise_power").get<double>()});
    m.modulator.se_lengthscale = j.at("modulator").at("se_lengthscale").get<double>();
    m.modulator.se_variance = j.at("modulator").at("se_variance").get<double>();
    m.modulator.mean_offset = j.at("modulator").at("mean_offset").get<double>();
    m.config_hash = j.at("training").at("config_hash").get<std::string>();
    m.train_loglik = j.at("training").at("loglik").get<double>();
  } catch (const json::exception& e) {
    throw std::runtime_error("model JSON missing fields in " + path.string() + ": " + e.what());
  }

  if (m.version.empty()) throw std::runtime_error("model has no version tag: " + path.string());
  if (m.filterbank.channels() != m.layout.M)
    throw std::runtime_error("model inconsistent: filterbank channels != layout M");
  if (static_cast<int>(m.params.kernels.size()) != m.layout.R)
    throw std::runtime_error("model inconsistent: kernel count != layout R");
  if (m.params.feedback.cols() != m.layout.P)
    throw std::runtime_error("model inconsistent: feedback cols != layout P");
  if (static_cast<int>(m.carriers.channels.size()) != m.layout.M)
    throw std::runtime_error("model inconsistent: carrier channels != layout M");
  check_conformance(m.params, m.layout);
  return m;
}

void save_frontend(const FrontEnd& fe, const std::filesystem::path& path) {
  json j;
  j["filterbank"] = {
      {"sample_rate", fe.filterbank.sample_rate},
      {"filter_order", fe.filterbank.filter_order},
      {"bandwidth_scale", fe.filterbank.bandwidth_scale},
      {"center_freqs", fe.filterbank.center_freqs},
      {"bandwidths", fe.filterbank.bandwidths},
      {"gains", fe.filterbank.gains},
  };
  j["demod"] = {{"lengthscale_ms", fe.demod.lengthscale_ms},
                {"decimation", fe.demod.decimation}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
}

FrontEnd load_frontend(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open front-end spec: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
  FrontEnd fe;
  try {
    const json& fb = j.at("filterbank");
    fe.filterbank.sample_rate = fb.at("sample_rate").get<int>();
    fe.filterbank.filter_order = fb.at("filter_order").get<int>();
    fe.filterbank.bandwidth_scale = fb.at("bandwidth_scale").get<double>();
    fe.filterbank.center_freqs = fb.at("center_freqs").get<std::vector<double>>();
    fe.filterbank.bandwidths = fb.at("bandwidths").get<std::vector<double>>();
    fe.filterbank.gains = fb.at("gains").get<std::vector<double>>();
    fe.demod.lengthscale_ms = j.at("demod").at("lengthscale_ms").get<double>();
    fe.demod.decimation = j.at("demod").at("decimation").get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error("front-end spec missing fields in " + path.string() + ": " +
                             e.what());
  }
  return fe;
}

std::string string_hash_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash_hex(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for hashing: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return string_hash_hex(bytes);
}

}  // namespace lfm
