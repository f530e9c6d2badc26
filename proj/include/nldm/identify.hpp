#pragma once

// Training: stack every trajectory's snapshot pairs, fit Lambda by minimum
// norm least squares, then score each training trajectory by iterating the
// learned operator from its own first d states.

#include <chrono>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nldm/core.hpp"
#include "nldm/features.hpp"
#include "nldm/lstsq.hpp"
#include "nldm/metrics.hpp"
#include "nldm/parallel.hpp"
#include "nldm/predict.hpp"

namespace nldm {

/// A training trajectory plus, when known, its noise-free counterpart that
/// the training RRMSE is measured against.
struct TrainingSample {
  Trajectory data;
  std::optional<Trajectory> reference;
};

struct TrainOptions {
  PredictOptions predict;
  unsigned threads = 1;
  /// Relative singular-value cutoff for the solve; <= 0 uses the default.
  double rcond = 0.0;
};

struct TrainingResult {
  LearnedOperator op;
  std::vector<double> per_trajectory_rrmse;
  double mean_rrmse = 0.0;
  /// RRMSE with all trajectories' compared windows pooled per state.
  double pooled_rrmse = 0.0;
  double elapsed_seconds = 0.0;
  LstsqReport lstsq;
  bool underdetermined = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline double pooled_score(const std::vector<Matrix>& predicted,
                           const std::vector<Matrix>& reference) {
  Eigen::Index total = 0;
  for (const auto& r : reference) total += r.cols();
  const auto s = reference.front().rows();
  Matrix p(s, total), r(s, total);
  Eigen::Index col = 0;
  for (std::size_t q = 0; q < reference.size(); ++q) {
    p.middleCols(col, reference[q].cols()) = predicted[q];
    r.middleCols(col, reference[q].cols()) = reference[q];
    col += reference[q].cols();
  }
  return rrmse(p, r, 0).mean_rrmse;
}

}  // namespace detail

inline TrainingResult train(std::span<const TrainingSample> samples, const FeatureConfig& config,
                            const TrainOptions& options = {}) {
  if (samples.empty()) throw ValidationError("train: no trajectories");
  std::vector<Trajectory> data;
  data.reserve(samples.size());
  for (std::size_t q = 0; q < samples.size(); ++q) {
    const auto& smp = samples[q];
    if (smp.reference) {
      if (smp.reference->size() != smp.data.size() || smp.reference->dim() != smp.data.dim()) {
        throw DimensionError("train: reference of trajectory " + std::to_string(q) +
                             " does not match its data shape");
      }
    }
    data.push_back(smp.data);
  }

  const MonomialBasis basis(config);
  const SnapshotPair pair = build_snapshot_pair(data, config, basis);

  const auto start = std::chrono::steady_clock::now();
  LstsqReport report = solve_min_frobenius(pair.features, pair.targets, options.rcond);

  TrainingResult result{
      LearnedOperator(report.solution, config, data.front().dt()), {}, 0.0, 0.0, 0.0, {}, false, {}};
  if (config.feature_dim() > pair.columns()) {
    result.underdetermined = true;
    result.warnings.push_back("underdetermined: L=" + std::to_string(config.feature_dim()) +
                              " features but only M=" + std::to_string(pair.columns()) +
                              " columns; returning the minimum-norm solution");
  }

  const int d = config.delay();
  const std::size_t q_count = samples.size();
  std::vector<double> scores(q_count, 0.0);
  std::vector<Matrix> pred_windows(q_count), ref_windows(q_count);
  std::vector<char> undefined(q_count, 0);
  parallel_for(q_count, options.threads, [&](std::size_t q) {
    const auto& smp = samples[q];
    const Trajectory& ref = smp.reference ? *smp.reference : smp.data;
    const Eigen::Index steps = smp.data.size() - d;
    PredictOptions popt = options.predict;
    popt.t0 = smp.data.t0();
    const Prediction pred = predict(result.op, basis, smp.data.states().leftCols(d), steps, popt);
    try {
      scores[q] = rrmse(pred.trajectory, ref, d).mean_rrmse;
    } catch (const UndefinedScoreError&) {
      scores[q] = kDiverged;
      undefined[q] = 1;
    }
    pred_windows[q] = pred.trajectory.states().rightCols(steps);
    ref_windows[q] = ref.states().rightCols(steps);
  });
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  for (std::size_t q = 0; q < q_count; ++q) {
    if (undefined[q]) {
      result.warnings.push_back("trajectory " + std::to_string(q) +
                                ": RRMSE undefined (a reference state is constant); scored as NaN");
    }
  }
  result.per_trajectory_rrmse = scores;
  result.mean_rrmse =
      std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  try {
    result.pooled_rrmse = detail::pooled_score(pred_windows, ref_windows);
  } catch (const UndefinedScoreError&) {
    result.pooled_rrmse = kDiverged;
  }

  TrainingSummary summary;
  summary.num_trajectories = static_cast<int>(q_count);
  summary.total_columns = pair.columns();
  summary.residual_frobenius = report.residual_frobenius;
  summary.effective_rank = report.effective_rank;
  summary.per_trajectory_rrmse = scores;
  result.op.set_summary(std::move(summary));
  result.lstsq = std::move(report);
  return result;
}

inline TrainingResult train(std::span<const Trajectory> trajs, const FeatureConfig& config,
                            const TrainOptions& options = {}) {
  std::vector<TrainingSample> samples;
  samples.reserve(trajs.size());
  for (const auto& t : trajs) samples.push_back({t, std::nullopt});
  return train(std::span<const TrainingSample>(samples), config, options);
}

}  // namespace nldm
