#pragma once

// Basin-of-attraction rasters: every node of a rectangular lattice of initial
// conditions is evolved (by the true flow or by iterating a learned operator)
// and labeled with the first catalog attractor that captures it.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nldm/core.hpp"
#include "nldm/features.hpp"
#include "nldm/odes.hpp"
#include "nldm/parallel.hpp"
#include "nldm/predict.hpp"

namespace nldm {

inline constexpr int kUnresolved = -1;
inline constexpr int kDivergedLabel = -2;

/// Planar lattice. For systems with S > 2 the lattice is a slice: the two
/// plotted components are `axes`, the remaining ones are taken from `base`.
struct GridSpec {
  double x_lo = -1.0, x_hi = 1.0;
  double y_lo = -1.0, y_hi = 1.0;
  int resolution = 2;
  std::array<int, 2> axes{0, 1};
  Vector base;  // full state; empty means zeros

  double x(int i) const { return x_lo + (x_hi - x_lo) * i / (resolution - 1); }
  double y(int j) const { return y_lo + (y_hi - y_lo) * j / (resolution - 1); }

  bool same_lattice(const GridSpec& o) const {
    return x_lo == o.x_lo && x_hi == o.x_hi && y_lo == o.y_lo && y_hi == o.y_hi &&
           resolution == o.resolution && axes == o.axes;
  }
};

struct CaptureSettings {
  double tol = 0.05;
  /// Consecutive in-tolerance steps required for capture.
  int persist = 10;
};

struct BasinGrid {
  enum class Source { integrator, op };
  GridSpec spec;
  std::vector<int> labels;  // labels[j * resolution + i] for (x(i), y(j))
  Source source = Source::integrator;
  std::vector<std::string> attractor_names;
  std::string note;

  int at(int i, int j) const { return labels[static_cast<std::size_t>(j) * spec.resolution + i]; }
};

struct GridAgreement {
  double fraction_agree = 1.0;
  long compared_cells = 0;
  std::map<std::pair<int, int>, long> confusion;  // (label in a, label in b) -> count
};

namespace detail {

inline void check_grid(const GridSpec& spec, int state_dim) {
  if (spec.resolution < 2) {
    throw ValidationError("basin: resolution must be >= 2, got " + std::to_string(spec.resolution));
  }
  if (!(spec.x_hi > spec.x_lo) || !(spec.y_hi > spec.y_lo)) {
    throw ValidationError("basin: window bounds must satisfy lo < hi");
  }
  for (int a : spec.axes) {
    if (a < 0 || a >= state_dim) throw ValidationError("basin: plotted axis out of range");
  }
  if (spec.axes[0] == spec.axes[1]) throw ValidationError("basin: plotted axes must differ");
  if (spec.base.size() != 0 && spec.base.size() != state_dim) {
    throw DimensionError("basin: slice base state has wrong dimension");
  }
}

inline Vector grid_point(const GridSpec& spec, int state_dim, int i, int j) {
  Vector p = spec.base.size() ? spec.base : Vector::Zero(state_dim);
  p[spec.axes[0]] = spec.x(i);
  p[spec.axes[1]] = spec.y(j);
  return p;
}

inline std::vector<std::string> names(const BenchmarkSystem& sys) {
  std::vector<std::string> out;
  for (const auto& a : sys.attractors) out.push_back(a.name);
  return out;
}

}  // namespace detail

/// Scan a state sequence in time order and return the first event: a
/// non-finite state (diverged) or an attractor whose capture test has held for
/// `persist` consecutive states. Point attractors capture within `tol`
/// (Euclidean); cycles capture when the radius in the (0, 1) plane is within
/// `tol` of the cycle radius and has drifted by less than `tol` over the run.
inline int classify(const std::vector<Attractor>& attractors,
                    const Eigen::Ref<const Matrix>& states, const CaptureSettings& capture) {
  std::vector<int> run(attractors.size(), 0);
  std::vector<double> run_start_radius(attractors.size(), 0.0);
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    const auto x = states.col(k);
    if (!x.allFinite()) return kDivergedLabel;
    for (std::size_t a = 0; a < attractors.size(); ++a) {
      const auto& att = attractors[a];
      bool inside = false;
      if (att.kind == Attractor::Kind::point) {
        inside = (x - att.location).norm() <= capture.tol;
      } else {
        const double r = std::hypot(x[0] - att.location[0], x[1] - att.location[1]);
        if (std::abs(r - att.radius) <= capture.tol) {
          if (run[a] == 0) run_start_radius[a] = r;
          inside = std::abs(r - run_start_radius[a]) < capture.tol;
        }
      }
      run[a] = inside ? run[a] + 1 : 0;
      if (run[a] >= capture.persist) return static_cast<int>(a);
    }
  }
  return kUnresolved;
}

struct TruthGridOptions {
  double horizon = 20.0;
  int samples = 1001;
  CaptureSettings capture;
  IntegratorSettings integrator;
  unsigned threads = 1;
};

/// Labels from integrating the true vector field.
inline BasinGrid ground_truth_grid(const BenchmarkSystem& sys, const GridSpec& spec,
                                   const TruthGridOptions& options = {}) {
  detail::check_grid(spec, sys.state_dim);
  if (sys.attractors.empty()) {
    throw ValidationError("basin: system " + std::string(to_string(sys.id)) +
                          " has no point or cycle attractor");
  }
  if (!(options.horizon > 0.0) || options.samples < 2) {
    throw ValidationError("basin: horizon must be positive and samples >= 2");
  }
  const int res = spec.resolution;
  BasinGrid grid{spec, std::vector<int>(static_cast<std::size_t>(res) * res, kUnresolved),
                 BasinGrid::Source::integrator, detail::names(sys), ""};
  parallel_for(grid.labels.size(), options.threads, [&](std::size_t cell) {
    const int i = static_cast<int>(cell % res), j = static_cast<int>(cell / res);
    const Vector ic = detail::grid_point(spec, sys.state_dim, i, j);
    try {
      const Trajectory t = integrate(sys, ic, 0.0, options.horizon, options.samples,
                                     options.integrator);
      grid.labels[cell] = classify(sys.attractors, t.states(), options.capture);
    } catch (const IntegrationError&) {
      grid.labels[cell] = kDivergedLabel;
    }
  });
  return grid;
}

struct OperatorGridOptions {
  int steps = 1000;
  CaptureSettings capture;
  PredictOptions predict;
  unsigned threads = 1;
};

/// Labels from iterating a learned operator. Each grid point is repeated d
/// times to form the seed block.
inline BasinGrid operator_grid(const LearnedOperator& op, const BenchmarkSystem& sys,
                               const GridSpec& spec, const OperatorGridOptions& options = {}) {
  detail::check_grid(spec, sys.state_dim);
  if (op.config().state_dim() != sys.state_dim) {
    throw DimensionError("basin: operator has S=" + std::to_string(op.config().state_dim()) +
                         ", system has S=" + std::to_string(sys.state_dim));
  }
  if (options.steps < 1) throw ValidationError("basin: steps must be >= 1");
  const int res = spec.resolution;
  const int d = op.config().delay();
  const MonomialBasis basis(op.config());
  BasinGrid grid{spec, std::vector<int>(static_cast<std::size_t>(res) * res, kUnresolved),
                 BasinGrid::Source::op, detail::names(sys),
                 "seeds: grid point replicated d=" + std::to_string(d) + " times"};
  parallel_for(grid.labels.size(), options.threads, [&](std::size_t cell) {
    const int i = static_cast<int>(cell % res), j = static_cast<int>(cell / res);
    const Vector p = detail::grid_point(spec, sys.state_dim, i, j);
    const Matrix seeds = p.replicate(1, d);
    const Prediction pred = predict(op, basis, seeds, options.steps, options.predict);
    grid.labels[cell] = classify(sys.attractors, pred.trajectory.states(), options.capture);
  });
  return grid;
}

/// Cellwise label agreement, ignoring cells unresolved in both grids. With no
/// comparable cell the fraction is 1.
inline GridAgreement grid_agreement(const BasinGrid& a, const BasinGrid& b) {
  if (!a.spec.same_lattice(b.spec)) {
    throw IncompatibleError("grid_agreement: grids differ in window, resolution or axes");
  }
  GridAgreement out;
  long agree = 0;
  for (std::size_t c = 0; c < a.labels.size(); ++c) {
    const int la = a.labels[c], lb = b.labels[c];
    ++out.confusion[{la, lb}];
    if (la == kUnresolved && lb == kUnresolved) continue;
    ++out.compared_cells;
    if (la == lb) ++agree;
  }
  if (out.compared_cells > 0) {
    out.fraction_agree = static_cast<double>(agree) / static_cast<double>(out.compared_cells);
  }
  return out;
}

}  // namespace nldm
