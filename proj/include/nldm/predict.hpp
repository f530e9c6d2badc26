#pragma once

// Iterated forecasting: lift the d most recent states, apply Lambda, append.

#include <optional>
#include <string>

#include "nldm/core.hpp"
#include "nldm/features.hpp"

namespace nldm {

struct PredictOptions {
  /// A produced state whose max-norm exceeds this counts as diverged.
  double divergence_threshold = 1e6;
  double t0 = 0.0;
};

struct Prediction {
  Trajectory trajectory;  // d seeds followed by `steps_requested` predictions
  std::optional<Eigen::Index> diverged_at;
  Eigen::Index steps_requested = 0;
};

/// `seeds` holds the d seed states as columns, oldest first.
inline Prediction predict(const LearnedOperator& op, const MonomialBasis& basis,
                          const Eigen::Ref<const Matrix>& seeds, Eigen::Index steps,
                          const PredictOptions& options = {}) {
  const auto& cfg = op.config();
  const int d = cfg.delay();
  const int s = cfg.state_dim();
  if (seeds.cols() != d) {
    throw DimensionError("predict: operator needs " + std::to_string(d) + " seed states, got " +
                         std::to_string(seeds.cols()));
  }
  if (seeds.rows() != s) {
    throw DimensionError("predict: seed states have dimension " + std::to_string(seeds.rows()) +
                         ", operator has S=" + std::to_string(s));
  }
  if (steps < 0) throw ValidationError("predict: steps must be non-negative");
  if (basis.size() != cfg.feature_dim() || basis.variables() != cfg.delayed_dim()) {
    throw DimensionError("predict: monomial basis does not match operator config");
  }

  const Eigen::Index total = d + steps;
  if (total < 2) throw ValidationError("predict: seeds plus steps must give at least 2 states");
  Matrix out(s, total);
  out.leftCols(d) = seeds;
  std::optional<Eigen::Index> diverged_at;

  Vector delayed(cfg.delayed_dim());
  Vector features(cfg.feature_dim());
  for (Eigen::Index k = d; k < total; ++k) {
    if (diverged_at) {
      out.col(k).setConstant(kDiverged);
      continue;
    }
    for (int i = 0; i < d; ++i) delayed.segment(i * s, s) = out.col(k - 1 - i);
    basis.lift_into(delayed, features);
    out.col(k).noalias() = op.lambda() * features;
    const auto next = out.col(k);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > options.divergence_threshold) {
      diverged_at = k;
      out.col(k).setConstant(kDiverged);
    }
  }
  return Prediction{Trajectory(std::move(out), op.dt(), options.t0), diverged_at, steps};
}

inline Prediction predict(const LearnedOperator& op, const Eigen::Ref<const Matrix>& seeds,
                          Eigen::Index steps, const PredictOptions& options = {}) {
  return predict(op, MonomialBasis(op.config()), seeds, steps, options);
}

}  // namespace nldm
