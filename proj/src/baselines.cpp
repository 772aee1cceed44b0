#include "lfm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lfm/numerics.hpp"

namespace lfm {
namespace {

constexpr double kMuEps = 1e-9;

double euclidean_objective(const Eigen::MatrixXd& V, const Eigen::MatrixXd& W,
                           const Eigen::MatrixXd& H) {
  return (V - W * H).squaredNorm();
}

double smoothness_penalty(const Eigen::MatrixXd& H) {
  double acc = 0.0;
  for (Eigen::Index t = 1; t < H.cols(); ++t) acc += (H.col(t) - H.col(t - 1)).squaredNorm();
  return acc;
}

}  // namespace

NmfFactors tnmf(const Eigen::MatrixXd& V, int K, int iters, double beta, std::uint64_t seed) {
  if ((V.array() < 0.0).any()) throw std::invalid_argument("tnmf: V must be nonnegative");
  if (K < 1) throw std::invalid_argument("tnmf: K >= 1");
  if (beta < 0.0) throw std::invalid_argument("tnmf: beta >= 0");
  const Eigen::Index M = V.rows(), T = V.cols();

  Rng rng(seed);
  NmfFactors f;
  f.W.resize(M, K);
  f.Hact.resize(K, T);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index k = 0; k < K; ++k) f.W(i, k) = rng.uniform_pos();
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index t = 0; t < T; ++t) f.Hact(k, t) = rng.uniform_pos();

  f.objective_trace.reserve(static_cast<std::size_t>(iters));
  for (int it = 0; it < iters; ++it) {
    // W <- W .* (V H^T) ./ (W H H^T + eps)
    const Eigen::MatrixXd hht = f.Hact * f.Hact.transpose();
    f.W = (f.W.array() * (V * f.Hact.transpose()).array() /
           ((f.W * hht).array() + kMuEps))
              .matrix();

    // H <- H .* (W^T V + beta * neighbors) ./ (W^T W H + beta * c .* H + eps)
    const Eigen::MatrixXd wtv = f.W.transpose() * V;
    const Eigen::MatrixXd wtwh = (f.W.transpose() * f.W) * f.Hact;
    Eigen::MatrixXd numer = wtv;
    Eigen::MatrixXd denom = wtwh;
    if (beta > 0.0 && T > 1) {
      for (Eigen::Index t = 0; t < T; ++t) {
        double near = 0.0;
        if (t > 0) near += 1.0;
        if (t + 1 < T) near += 1.0;
        denom.col(t) += beta * near * f.Hact.col(t);
        if (t > 0) numer.col(t) += beta * f.Hact.col(t - 1);
        if (t + 1 < T) numer.col(t) += beta * f.Hact.col(t + 1);
      }
    }
    f.Hact = (f.Hact.array() * numer.array() / (denom.array() + kMuEps)).matrix();

    f.objective_trace.push_back(euclidean_objective(V, f.W, f.Hact) +
                                beta * smoothness_penalty(f.Hact));
  }
  return f;
}

NmfFactors nmf(const Eigen::MatrixXd& V, int K, int iters, std::uint64_t seed) {
  return tnmf(V, K, iters, 0.0, seed);
}

double rms_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("rms_error: shape mismatch");
  return std::sqrt((A - B).squaredNorm() / static_cast<double>(A.size()));
}

double cosine_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("cosine_distance: shape mismatch");
  const double na = A.norm(), nb = B.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_distance: zero matrix input");
  double dot = 0.0;
  for (Eigen::Index c = 0; c < A.cols(); ++c) dot += A.col(c).dot(B.col(c));
  return 1.0 - dot / (na * nb);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RelativeReport relative_report(const std::vector<SoundMetrics>& sounds) {
  RelativeReport rep;
  const auto metric_of = [](const MethodMetrics& m, int which) {
    return which == 0 ? m.rms : m.cosine;
  };
  const char* metric_names[2] = {"rms", "cosine"};
  const char* method_names[3] = {"lfm", "tnmf", "nmf"};

  std::vector<double> ratios[2][2];  // [method lfm|tnmf][metric]

  for (const SoundMetrics& s : sounds) {
    const MethodMetrics* methods[3] = {&s.lfm, &s.tnmf, &s.nmf};
    for (int metric = 0; metric < 2; ++metric) {
      const double nmf_value = metric_of(s.nmf, metric);
      const bool valid = nmf_value != 0.0;
      if (!valid)
        rep.excluded.push_back(s.sound + "/" + metric_names[metric]);
      for (int method = 0; method < 3; ++method) {
        RelativeReport::Row row;
        row.sound = s.sound;
        row.method = method_names[method];
        row.metric = metric_names[metric];
        row.value = metric_of(*methods[method], metric);
        row.ratio_valid = valid;
        row.ratio_to_nmf = valid ? row.value / nmf_value : 0.0;
        rep.rows.push_back(row);
        if (valid && method < 2) ratios[method][metric].push_back(row.ratio_to_nmf);
      }
    }
  }

  for (int method = 0; method < 2; ++method)
    for (int metric = 0; metric < 2; ++metric) {
      if (ratios[method][metric].empty()) continue;
      RelativeReport::Summary s;
      s.method = method_names[method];
      s.metric = metric_names[metric];
      s.median = quantile(ratios[method][metric], 0.5);
      s.q1 = quantile(ratios[method][metric], 0.25);
      s.q3 = quantile(ratios[method][metric], 0.75);
      rep.summary.push_back(s);
    }
  return rep;
}

}  // namespace lfm
