#pragma once

#include <cstdint>
#include <vector>

#include "lfm/audio_io.hpp"
#include "lfm/lfm_core.hpp"

namespace lfm {

struct TrainConfig {
  int forces = 1;    // R
  int history = 10;  // P
  std::vector<int> active_feedback = {1, 2, 5, 8, 10};  // intersected with 1..P
  std::vector<int> active_lags = {0, 1, 3, 6};          // intersected with 0..P
  int stage1_channels = 6;
  int max_iters = 60;  // per stage
  double fd_step = 1e-4;
  std::uint64_t seed = 0;
  double skip_threshold_db = -60.0;
  int threads = 0;  // 0 = hardware concurrency
};

struct TrainReport {
  /// Initial value then one entry per accepted step, per stage (stage starts
  /// at stage_trace_offsets[i]); nondecreasing within each stage.
  std::vector<double> loglik_trace;
  std::vector<int> stage_trace_offsets;
  LfmParams params;
  StateLayout layout;
  double final_loglik = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::vector<int>> stage_channels;
  bool iteration_cap_reached = false;
};

/// Indices of the k rows with the largest energy (sum of squares), ties
/// broken toward the lower index. Returned sorted ascending.
std::vector<int> select_channels(const EnvelopeMatrix& env, int k);

/// Frame skipped iff every channel is below peak * 10^(threshold_db/20).
std::vector<bool> skip_mask(const EnvelopeMatrix& env, double threshold_db);

/// Data-driven starting point: damping from log-envelope decay slopes,
/// sensitivities from peak levels, kernel lengthscale from the envelope
/// autocorrelation.
LfmParams init_params(const EnvelopeMatrix& env, const TrainConfig& cfg);

/// Staged maximum-likelihood fit: the highest-energy channels first with the
/// shared hyperparameters, then the remaining channels with everything from
/// stage one frozen.
TrainReport optimize(const EnvelopeMatrix& env, const TrainConfig& cfg);

/// Picks R in [r_min, r_max] by BIC over full staged fits.
int choose_forces(const EnvelopeMatrix& env, const TrainConfig& base, int r_min = 1,
                  int r_max = 3);

namespace detail {

/// Intersect a candidate index set with [lo, hi], sorted unique.
std::vector<int> clamp_index_set(const std::vector<int>& set, int lo, int hi);

/// Unbounded optimizer coordinates for the bounded model parameters.
/// Exposed for the reparameterization round-trip tests.
double pack_positive(double x);
double unpack_positive(double v);
double pack_gamma(double g);    // [0.5, 1] -> R via logit
double unpack_gamma(double v);  // R -> [0.5, 1]

}  // namespace detail

}  // namespace lfm
