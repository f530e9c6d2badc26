#pragma once

// Delayed-state stacking and polynomial lifting.
//
// The delayed vector of step k is [x_{k-1}; x_{k-2}; ...; x_{k-d}] (newest
// first). Its d*S entries are the variables of a monomial basis holding every
// monomial of total degree 1..o, ordered by ascending degree and then
// lexicographically on the sorted variable-index sequence, i.e. graded
// lexicographic with x_1 > x_2 > ... on exponent tuples. There is no constant
// term.

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nldm/core.hpp"

namespace nldm {

inline constexpr const char* kGradedLexTag = "graded-lex";

struct MonomialIndex {
  std::vector<int> exponents;  // one per delayed variable
  int total_degree = 0;

  bool operator==(const MonomialIndex&) const = default;
};

/// Monomial set for one FeatureConfig. Each monomial of degree g > 1 is
/// stored as (parent of degree g-1) * (one variable), so evaluating all of
/// them costs one multiplication per feature.
class MonomialBasis {
 public:
  explicit MonomialBasis(const FeatureConfig& config)
      : vars_(config.delayed_dim()), degree_(config.degree()) {
    terms_.reserve(config.feature_dim());
    // index sequences i_1 <= ... <= i_g, generated parent-major so that the
    // order within a degree is lexicographic on the sequence
    std::vector<std::vector<int>> seqs;
    std::size_t level_begin = 0;
    for (int v = 0; v < vars_; ++v) {
      seqs.push_back({v});
      parent_.push_back(-1);
      var_.push_back(v);
    }
    for (int g = 2; g <= degree_; ++g) {
      const std::size_t level_end = seqs.size();
      for (std::size_t p = level_begin; p < level_end; ++p) {
        for (int v = seqs[p].back(); v < vars_; ++v) {
          auto s = seqs[p];
          s.push_back(v);
          seqs.push_back(std::move(s));
          parent_.push_back(static_cast<int>(p));
          var_.push_back(v);
        }
      }
      level_begin = level_end;
    }
    for (const auto& s : seqs) {
      MonomialIndex m{std::vector<int>(vars_, 0), static_cast<int>(s.size())};
      for (int v : s) ++m.exponents[v];
      terms_.push_back(std::move(m));
    }
    if (static_cast<int>(terms_.size()) != config.feature_dim()) {
      throw CapacityError("monomial basis: enumeration disagrees with feature_dim");
    }
  }

  /// Same monomial set in a caller-chosen order. `terms` must be a
  /// permutation of the canonical set.
  static MonomialBasis with_order(const FeatureConfig& config,
                                  const std::vector<MonomialIndex>& terms) {
    MonomialBasis canonical(config);
    if (terms.size() != canonical.terms_.size()) {
      throw DimensionError("monomial basis: ordering has wrong length");
    }
    std::vector<int> perm;  // perm[new] = canonical index
    perm.reserve(terms.size());
    std::vector<bool> seen(terms.size(), false);
    for (const auto& t : terms) {
      auto it = std::find(canonical.terms_.begin(), canonical.terms_.end(), t);
      if (it == canonical.terms_.end()) {
        throw ValidationError("monomial basis: ordering contains a foreign monomial");
      }
      const auto idx = static_cast<std::size_t>(it - canonical.terms_.begin());
      if (seen[idx]) throw ValidationError("monomial basis: ordering repeats a monomial");
      seen[idx] = true;
      perm.push_back(static_cast<int>(idx));
    }
    MonomialBasis out = canonical;
    out.output_order_ = std::move(perm);
    out.terms_ = terms;
    return out;
  }

  int size() const noexcept { return static_cast<int>(terms_.size()); }
  int variables() const noexcept { return vars_; }
  const std::vector<MonomialIndex>& terms() const noexcept { return terms_; }

  /// Evaluate every monomial on one delayed vector.
  Vector lift(const Eigen::Ref<const Vector>& delayed) const {
    if (delayed.size() != vars_) {
      throw DimensionError("lift: delayed vector has length " + std::to_string(delayed.size()) +
                           ", expected " + std::to_string(vars_));
    }
    Vector canonical(parent_.size());
    evaluate(delayed, canonical);
    return reorder(canonical);
  }

  /// Lift into a preallocated buffer (canonical order only); used by the
  /// prediction loop to avoid allocations.
  void lift_into(const Eigen::Ref<const Vector>& delayed, Eigen::Ref<Vector> out) const {
    if (!output_order_.empty()) {
      out = lift(delayed);
      return;
    }
    evaluate(delayed, out);
  }

  /// Column-wise lift of a (d*S) x M matrix of delayed vectors.
  Matrix lift_columns(const Eigen::Ref<const Matrix>& delayed) const {
    if (delayed.rows() != vars_) {
      throw DimensionError("lift: delayed matrix has " + std::to_string(delayed.rows()) +
                           " rows, expected " + std::to_string(vars_));
    }
    Matrix canonical(static_cast<Eigen::Index>(parent_.size()), delayed.cols());
    for (std::size_t j = 0; j < parent_.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      if (parent_[j] < 0) {
        canonical.row(row) = delayed.row(var_[j]);
      } else {
        canonical.row(row) =
            canonical.row(parent_[j]).cwiseProduct(delayed.row(var_[j]));
      }
    }
    if (output_order_.empty()) return canonical;
    Matrix out(canonical.rows(), canonical.cols());
    for (std::size_t j = 0; j < output_order_.size(); ++j) {
      out.row(static_cast<Eigen::Index>(j)) = canonical.row(output_order_[j]);
    }
    return out;
  }

 private:
  template <typename Out>
  void evaluate(const Eigen::Ref<const Vector>& delayed, Out& out) const {
    for (std::size_t j = 0; j < parent_.size(); ++j) {
      const double x = delayed[var_[j]];
      out[static_cast<Eigen::Index>(j)] = parent_[j] < 0 ? x : out[parent_[j]] * x;
    }
  }

  Vector reorder(Vector canonical) const {
    if (output_order_.empty()) return canonical;
    Vector out(canonical.size());
    for (std::size_t j = 0; j < output_order_.size(); ++j) {
      out[static_cast<Eigen::Index>(j)] = canonical[output_order_[j]];
    }
    return out;
  }

  int vars_;
  int degree_;
  std::vector<MonomialIndex> terms_;
  std::vector<int> parent_;
  std::vector<int> var_;
  std::vector<int> output_order_;
};

/// Stack the d states preceding step k, newest first.
inline Vector delayed_state(const Eigen::Ref<const Matrix>& states, Eigen::Index k, int d) {
  if (d < 1) throw ValidationError("delayed_state: d must be >= 1");
  if (k < d) {
    throw IndexError("delayed_state: step " + std::to_string(k) + " has only " +
                     std::to_string(k) + " past states, needs " + std::to_string(d) +
                     " (short by " + std::to_string(d - k) + ")");
  }
  if (k > states.cols() - 1) {
    throw IndexError("delayed_state: step " + std::to_string(k) + " beyond last index " +
                     std::to_string(states.cols() - 1));
  }
  const auto s = states.rows();
  Vector out(s * d);
  for (int i = 0; i < d; ++i) out.segment(i * s, s) = states.col(k - 1 - i);
  return out;
}

inline Vector delayed_state(const Trajectory& traj, Eigen::Index k, int d) {
  return delayed_state(traj.states(), k, d);
}

inline Vector lift(const Eigen::Ref<const Vector>& delayed, const FeatureConfig& config) {
  return MonomialBasis(config).lift(delayed);
}

/// Stack (target, lifted delayed state) columns of every trajectory,
/// trajectory-major and time-ascending.
inline SnapshotPair build_snapshot_pair(std::span<const Trajectory> trajs,
                                        const FeatureConfig& config,
                                        const MonomialBasis& basis) {
  if (trajs.empty()) throw ValidationError("snapshot pair: no trajectories");
  const int d = config.delay();
  const auto s = config.state_dim();
  Eigen::Index m = 0;
  for (std::size_t q = 0; q < trajs.size(); ++q) {
    const auto& t = trajs[q];
    if (t.dim() != s) {
      throw DimensionError("snapshot pair: trajectory " + std::to_string(q) + " has S=" +
                           std::to_string(t.dim()) + ", config has S=" + std::to_string(s));
    }
    if (!same_dt(t.dt(), trajs[0].dt())) {
      throw IncompatibleError("snapshot pair: trajectory " + std::to_string(q) + " has dt=" +
                              std::to_string(t.dt()) + ", trajectory 0 has dt=" +
                              std::to_string(trajs[0].dt()));
    }
    if (t.size() <= d) {
      throw TooShortError("snapshot pair: trajectory " + std::to_string(q) + " has K=" +
                          std::to_string(t.size()) + " <= d=" + std::to_string(d));
    }
    m += t.size() - d;
  }

  SnapshotPair pair;
  pair.targets.resize(s, m);
  Matrix delayed(static_cast<Eigen::Index>(s) * d, m);
  Eigen::Index col = 0;
  for (const auto& t : trajs) {
    const auto& x = t.states();
    const auto cols = t.size() - d;
    pair.targets.middleCols(col, cols) = x.rightCols(cols);
    for (int i = 0; i < d; ++i) {
      // block i holds x_{k-1-i} for k = d..K-1
      delayed.block(static_cast<Eigen::Index>(i) * s, col, s, cols) = x.middleCols(d - 1 - i, cols);
    }
    pair.columns_per_trajectory.push_back(cols);
    col += cols;
  }
  pair.features = basis.lift_columns(delayed);
  return pair;
}

inline SnapshotPair build_snapshot_pair(std::span<const Trajectory> trajs,
                                        const FeatureConfig& config) {
  return build_snapshot_pair(trajs, config, MonomialBasis(config));
}

}  // namespace nldm
