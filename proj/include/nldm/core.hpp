#pragma once

// Domain types shared by every nldm module: trajectories on a uniform time
// grid, the (delay, degree) feature configuration, learned operators and the
// stacked snapshot matrices they are fitted on.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nldm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using StateVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class CapacityError : public Error { using Error::Error; };
class IncompatibleError : public Error { using Error::Error; };
class TooShortError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class UndefinedScoreError : public Error { using Error::Error; };
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double last_good_time)
      : Error(what), last_good_time_(last_good_time) {}
  double last_good_time() const noexcept { return last_good_time_; }

 private:
  double last_good_time_;
};
class ConfigError : public Error { using Error::Error; };

/// Non-finite sentinel marking diverged prediction entries.
inline constexpr double kDiverged = std::numeric_limits<double>::quiet_NaN();

/// Relative tolerance used when comparing sample spacings of trajectories.
inline constexpr double kDtRelTol = 1e-9;

inline bool same_dt(double a, double b) {
  return std::abs(a - b) <= kDtRelTol * std::max(std::abs(a), std::abs(b));
}

// ---------------------------------------------------------------------------
// Trajectory

struct Provenance {
  enum class Kind { clean, noisy };
  Kind kind = Kind::clean;
  double sigma_pct = 0.0;
  std::uint64_t seed = 0;

  static Provenance clean() { return {}; }
  static Provenance noisy(double sigma_pct, std::uint64_t seed) {
    return {Kind::noisy, sigma_pct, seed};
  }
  bool operator==(const Provenance&) const = default;
};

/// Uniformly sampled series of S-dimensional states. Column k of states()
/// is the state at t0 + k*dt.
class Trajectory {
 public:
  Trajectory(Matrix states, double dt, double t0 = 0.0,
             Provenance provenance = Provenance::clean())
      : states_(std::move(states)), dt_(dt), t0_(t0), provenance_(provenance) {
    if (states_.rows() < 1) throw DimensionError("trajectory: state dimension must be >= 1");
    if (states_.cols() < 2) {
      throw TooShortError("trajectory: needs at least 2 states, got " +
                          std::to_string(states_.cols()));
    }
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
      throw ValidationError("trajectory: dt must be positive and finite");
    }
  }

  Eigen::Index size() const noexcept { return states_.cols(); }
  Eigen::Index dim() const noexcept { return states_.rows(); }
  double dt() const noexcept { return dt_; }
  double t0() const noexcept { return t0_; }
  double time(Eigen::Index k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  const Matrix& states() const noexcept { return states_; }
  auto state(Eigen::Index k) const { return states_.col(k); }

  Trajectory with_states(Matrix states, Provenance provenance) const {
    return Trajectory(std::move(states), dt_, t0_, provenance);
  }

 private:
  Matrix states_;
  double dt_;
  double t0_;
  Provenance provenance_;
};

// ---------------------------------------------------------------------------
// Feature dimension

/// Number of monomials of total degree 1..degree in dim_per_state*delay
/// variables: C(dS + o, o) - 1. Throws CapacityError on overflow.
inline std::size_t feature_dim(int state_dim, int delay, int degree) {
  if (state_dim < 1 || delay < 1 || degree < 1) {
    throw ValidationError("feature_dim: S, d and o must all be >= 1");
  }
  const std::uint64_t vars = static_cast<std::uint64_t>(state_dim) *
                             static_cast<std::uint64_t>(delay);
  // C(n+k, k) built incrementally; every partial product is itself a binomial
  // coefficient so the division is exact.
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= static_cast<std::uint64_t>(degree); ++i) {
    std::uint64_t num = 0;
    if (__builtin_mul_overflow(c, vars + i, &num)) {
      throw CapacityError("feature_dim: binomial overflows 64 bits");
    }
    c = num / i;
  }
  const std::uint64_t dim = c - 1;
  if (dim > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw CapacityError("feature_dim: feature dimension " + std::to_string(dim) +
                        " exceeds supported capacity");
  }
  return static_cast<std::size_t>(dim);
}

/// Time-delay order d and maximal polynomial degree o for a system with S
/// states, with the induced feature dimension L.
class FeatureConfig {
 public:
  FeatureConfig(int state_dim, int delay, int degree)
      : state_dim_(state_dim),
        delay_(delay),
        degree_(degree),
        feature_dim_(nldm::feature_dim(state_dim, delay, degree)) {}

  int state_dim() const noexcept { return state_dim_; }
  int delay() const noexcept { return delay_; }
  int degree() const noexcept { return degree_; }
  /// Number of delayed variables d*S.
  int delayed_dim() const noexcept { return state_dim_ * delay_; }
  /// Feature dimension L.
  int feature_dim() const noexcept { return static_cast<int>(feature_dim_); }

  bool operator==(const FeatureConfig&) const = default;

 private:
  int state_dim_;
  int delay_;
  int degree_;
  std::size_t feature_dim_;
};

// ---------------------------------------------------------------------------
// Snapshot matrices and learned operators

/// Stacked one-step pairs: targets column j is the state one step after the
/// newest delayed state embedded in features column j.
struct SnapshotPair {
  Matrix targets;   // S x M
  Matrix features;  // L x M
  /// Columns contributed by each trajectory, in stacking order.
  std::vector<Eigen::Index> columns_per_trajectory;

  Eigen::Index columns() const noexcept { return targets.cols(); }
};

struct TrainingSummary {
  int num_trajectories = 0;
  Eigen::Index total_columns = 0;
  double residual_frobenius = 0.0;
  int effective_rank = 0;
  std::vector<double> per_trajectory_rrmse;
};

/// S x L map from lifted delayed features to the next state.
class LearnedOperator {
 public:
  LearnedOperator(Matrix lambda, FeatureConfig config, double dt,
                  TrainingSummary summary = {})
      : lambda_(std::move(lambda)), config_(config), dt_(dt), summary_(std::move(summary)) {
    if (lambda_.rows() != config_.state_dim() || lambda_.cols() != config_.feature_dim()) {
      throw DimensionError("operator: lambda is " + std::to_string(lambda_.rows()) + "x" +
                           std::to_string(lambda_.cols()) + ", config requires " +
                           std::to_string(config_.state_dim()) + "x" +
                           std::to_string(config_.feature_dim()));
    }
    if (!(dt_ > 0.0)) throw ValidationError("operator: dt must be positive");
  }

  const Matrix& lambda() const noexcept { return lambda_; }
  const FeatureConfig& config() const noexcept { return config_; }
  double dt() const noexcept { return dt_; }
  const TrainingSummary& summary() const noexcept { return summary_; }
  void set_summary(TrainingSummary s) { summary_ = std::move(s); }

 private:
  Matrix lambda_;
  FeatureConfig config_;
  double dt_;
  TrainingSummary summary_;
};

}  // namespace nldm
