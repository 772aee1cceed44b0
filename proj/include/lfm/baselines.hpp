#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace lfm {

/// Nonnegative factorization V ~= W * Hact with the per-iteration objective.
struct NmfFactors {
  Eigen::MatrixXd W;     // M x K basis
  Eigen::MatrixXd Hact;  // K x T activations
  std::vector<double> objective_trace;
};

/// Multiplicative-update NMF for the Euclidean cost, uniform (0,1] init.
NmfFactors nmf(const Eigen::MatrixXd& V, int K, int iters, std::uint64_t seed);

/// Temporal NMF: Euclidean cost plus beta * sum of squared activation
/// differences across time. beta = 0 reproduces nmf exactly.
NmfFactors tnmf(const Eigen::MatrixXd& V, int K, int iters, double beta, std::uint64_t seed);

double rms_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// 1 - cos angle between vec(A) and vec(B), in [0, 2].
double cosine_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct MethodMetrics {
  double rms = 0.0;
  double cosine = 0.0;
};

struct SoundMetrics {
  std::string sound;
  MethodMetrics lfm;
  MethodMetrics tnmf;
  MethodMetrics nmf;
};

/// Per-sound metric ratios against NMF with median / first / third quartile
/// summaries across sounds.
struct RelativeReport {
  struct Row {
    std::string sound;
    std::string method;  // "lfm" | "tnmf" | "nmf"
    std::string metric;  // "rms" | "cosine"
    double value = 0.0;
    double ratio_to_nmf = 0.0;
    bool ratio_valid = true;
  };
  struct Summary {
    std::string method;
    std::string metric;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
  };
  std::vector<Row> rows;
  std::vector<Summary> summary;
  std::vector<std::string> excluded;  // "sound/metric" entries with zero NMF error
};

RelativeReport relative_report(const std::vector<SoundMetrics>& sounds);

/// Quartiles by linear interpolation over the sorted values (p in [0,1]).
double quantile(std::vector<double> values, double p);

}  // namespace lfm
