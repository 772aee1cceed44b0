#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace lfm {

/// Seeded random stream used everywhere sampling is required, so that
/// every generative path is reproducible from a single integer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double gaussian() { return normal_(gen_); }

  /// Uniform draw on (0, 1] (never exactly zero).
  double uniform_pos() { return 1.0 - unit_(gen_); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

/// Derive an independent stream for substream `k` of a base seed.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

struct PsdSqrt {
  Eigen::MatrixXd root;  // symmetric, root * root^T = clamped input
  double min_eig = 0.0;  // smallest eigenvalue before clamping
  double max_eig = 0.0;
};

/// Symmetric PSD square root via eigendecomposition. Negative eigenvalues
/// are clamped to zero; `min_eig` reports how negative the input was so the
/// caller can tell round-off from genuine divergence. The symmetric root is
/// permutation-equivariant, which Cholesky factors are not.
inline PsdSqrt psd_sqrt(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  PsdSqrt out;
  Eigen::VectorXd ev = es.eigenvalues();
  out.min_eig = ev.minCoeff();
  out.max_eig = ev.maxCoeff();
  Eigen::VectorXd clamped = ev.cwiseMax(0.0).cwiseSqrt();
  out.root = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

}  // namespace lfm
