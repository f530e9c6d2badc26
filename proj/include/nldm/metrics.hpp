#pragma once

// Relative root-mean-square error between a predicted and a reference
// trajectory, per state variable: RMSE over the compared window divided by
// the population standard deviation of the reference over the same window.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nldm/core.hpp"

namespace nldm {

struct SkillScore {
  std::vector<double> per_state_rrmse;
  double mean_rrmse = 0.0;
  Eigen::Index compared_points = 0;  // I = K - d

  bool diverged() const { return !std::isfinite(mean_rrmse); }
};

/// Compare columns first..K-1 of two equally sized state matrices.
inline SkillScore rrmse(const Eigen::Ref<const Matrix>& predicted,
                        const Eigen::Ref<const Matrix>& reference, Eigen::Index first) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols()) {
    throw DimensionError("rrmse: predicted is " + std::to_string(predicted.rows()) + "x" +
                         std::to_string(predicted.cols()) + ", reference is " +
                         std::to_string(reference.rows()) + "x" +
                         std::to_string(reference.cols()));
  }
  if (first < 0 || first >= reference.cols()) {
    throw IndexError("rrmse: window start " + std::to_string(first) + " leaves no points");
  }
  const auto count = reference.cols() - first;
  const double n = static_cast<double>(count);

  SkillScore score;
  score.compared_points = count;
  score.per_state_rrmse.reserve(static_cast<std::size_t>(reference.rows()));
  for (Eigen::Index s = 0; s < reference.rows(); ++s) {
    const auto ref = reference.row(s).tail(count);
    const auto pred = predicted.row(s).tail(count);
    const double mean = ref.mean();
    const double sd = std::sqrt((ref.array() - mean).square().sum() / n);
    if (!(sd > 0.0)) {
      throw UndefinedScoreError("rrmse: reference state x" + std::to_string(s + 1) +
                                " has zero standard deviation over the compared window");
    }
    if (!pred.allFinite()) {
      score.per_state_rrmse.push_back(kDiverged);
      continue;
    }
    const double rmse = std::sqrt((pred - ref).array().square().sum() / n);
    score.per_state_rrmse.push_back(rmse / sd);
  }
  score.mean_rrmse = std::accumulate(score.per_state_rrmse.begin(), score.per_state_rrmse.end(), 0.0) /
                     static_cast<double>(score.per_state_rrmse.size());
  return score;
}

inline SkillScore rrmse(const Trajectory& predicted, const Trajectory& reference, int d) {
  if (!same_dt(predicted.dt(), reference.dt())) {
    throw DimensionError("rrmse: trajectories have different dt");
  }
  return rrmse(predicted.states(), reference.states(), d);
}

}  // namespace nldm
