#pragma once

// Benchmark vector fields, an adaptive Dormand-Prince 5(4) integrator with
// dense output sampled on a uniform grid, and seeded Gaussian measurement
// noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nldm/core.hpp"

namespace nldm {

enum class SystemId { LHO, DNLS, TwoAttractor, DoubleWell, MFCD, DualLimitCycle, Lorenz };

inline constexpr SystemId kAllSystems[] = {SystemId::LHO,        SystemId::DNLS,
                                           SystemId::TwoAttractor, SystemId::DoubleWell,
                                           SystemId::MFCD,       SystemId::DualLimitCycle,
                                           SystemId::Lorenz};

inline std::string_view to_string(SystemId id) {
  switch (id) {
    case SystemId::LHO: return "LHO";
    case SystemId::DNLS: return "DNLS";
    case SystemId::TwoAttractor: return "TwoAttractor";
    case SystemId::DoubleWell: return "DoubleWell";
    case SystemId::MFCD: return "MFCD";
    case SystemId::DualLimitCycle: return "DualLimitCycle";
    case SystemId::Lorenz: return "Lorenz";
  }
  return "?";
}

inline std::optional<SystemId> parse_system_id(std::string_view name) {
  for (auto id : kAllSystems) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

/// Equilibrium or periodic orbit used to classify where a trajectory ends.
/// Cycles are circles centred at `location` (the centre) in the plane of
/// state components (0, 1).
struct Attractor {
  enum class Kind { point, cycle };
  std::string name;
  Kind kind = Kind::point;
  Vector location;
  double radius = 0.0;
};

using Rhs = std::function<void(const Vector& x, Vector& dxdt)>;

struct BenchmarkSystem {
  SystemId id;
  std::map<std::string, double> params;
  int state_dim = 0;
  Rhs rhs;
  std::vector<Attractor> attractors;

  Vector eval(const Vector& x) const {
    Vector dx(state_dim);
    rhs(x, dx);
    return dx;
  }
};

namespace detail {

inline double param(const std::map<std::string, double>& p, const std::string& key) {
  return p.at(key);
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace detail

inline std::map<std::string, double> default_params(SystemId id) {
  switch (id) {
    case SystemId::LHO: return {{"delta", 1.0}};
    case SystemId::DNLS: return {{"delta", 1.0}};
    case SystemId::TwoAttractor: return {};
    case SystemId::DoubleWell: return {{"delta", 0.5}, {"lambda", 1.3}};
    case SystemId::MFCD: return {{"mu", 0.1}, {"omega", 2.0}, {"lambda", 6.0}, {"A", -0.1}};
    case SystemId::DualLimitCycle: return {};
    case SystemId::Lorenz: return {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
  }
  return {};
}

/// Catalog entry with defaults replaced by `overrides`. Unknown parameter
/// names are rejected.
inline BenchmarkSystem make_system(SystemId id, const std::map<std::string, double>& overrides = {}) {
  using detail::vec;
  auto p = default_params(id);
  for (const auto& [k, v] : overrides) {
    if (!p.contains(k)) {
      throw ConfigError("system " + std::string(to_string(id)) + " has no parameter '" + k + "'");
    }
    p[k] = v;
  }
  BenchmarkSystem sys{id, p, 2, {}, {}};
  switch (id) {
    case SystemId::LHO: {
      const double delta = p["delta"];
      sys.rhs = [delta](const Vector& x, Vector& dx) {
        dx[0] = x[1];
        dx[1] = -x[0] - delta * x[1];
      };
      sys.attractors = {{"origin", Attractor::Kind::point, vec({0.0, 0.0}), 0.0}};
      break;
    }
    case SystemId::DNLS: {
      const double delta = p["delta"];
      sys.rhs = [delta](const Vector& x, Vector& dx) {
        dx[0] = x[1];
        dx[1] = -x[0] * x[0] * x[0] - delta * x[1];
      };
      sys.attractors = {{"origin", Attractor::Kind::point, vec({0.0, 0.0}), 0.0}};
      break;
    }
    case SystemId::TwoAttractor: {
      sys.rhs = [](const Vector& x, Vector& dx) {
        dx[0] = x[0] - x[0] * x[0] * x[0];
        dx[1] = -x[1];
      };
      sys.attractors = {{"sink_left", Attractor::Kind::point, vec({-1.0, 0.0}), 0.0},
                        {"sink_right", Attractor::Kind::point, vec({1.0, 0.0}), 0.0}};
      break;
    }
    case SystemId::DoubleWell: {
      const double delta = p["delta"], lambda = p["lambda"];
      sys.rhs = [delta, lambda](const Vector& x, Vector& dx) {
        dx[0] = x[1];
        dx[1] = -x[0] * (-1.0 + lambda * x[0] + x[0] * x[0]) - delta * x[1];
      };
      const double root = std::sqrt(lambda * lambda + 4.0);
      sys.attractors = {
          {"sink_left", Attractor::Kind::point, vec({(-lambda - root) / 2.0, 0.0}), 0.0},
          {"sink_right", Attractor::Kind::point, vec({(-lambda + root) / 2.0, 0.0}), 0.0}};
      break;
    }
    case SystemId::MFCD: {
      sys.state_dim = 3;
      const double mu = p["mu"], omega = p["omega"], lambda = p["lambda"], a = p["A"];
      sys.rhs = [mu, omega, lambda, a](const Vector& x, Vector& dx) {
        dx[0] = mu * x[0] - omega * x[1] + a * x[0] * x[2];
        dx[1] = omega * x[0] + mu * x[1] + a * x[1] * x[2];
        dx[2] = -lambda * (x[2] - x[0] * x[0] - x[1] * x[1]);
      };
      const double z = -mu / a;
      if (z > 0.0) {
        sys.attractors = {{"periodic_orbit", Attractor::Kind::cycle, vec({0.0, 0.0, z}),
                           std::sqrt(z)}};
      }
      break;
    }
    case SystemId::DualLimitCycle: {
      sys.rhs = [](const Vector& x, Vector& dx) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        const double g = (r2 - 1.0) * (4.0 - r2);
        dx[0] = x[0] * g - x[1];
        dx[1] = x[1] * g + x[0];
      };
      sys.attractors = {{"origin", Attractor::Kind::point, vec({0.0, 0.0}), 0.0},
                        {"cycle_r2", Attractor::Kind::cycle, vec({0.0, 0.0}), 2.0}};
      break;
    }
    case SystemId::Lorenz: {
      sys.state_dim = 3;
      const double sigma = p["sigma"], rho = p["rho"], beta = p["beta"];
      sys.rhs = [sigma, rho, beta](const Vector& x, Vector& dx) {
        dx[0] = sigma * (x[1] - x[0]);
        dx[1] = x[0] * (rho - x[2]) - x[1];
        dx[2] = x[0] * x[1] - beta * x[2];
      };
      break;
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

struct IntegratorSettings {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  /// Upper bound on the step; <= 0 means the whole interval.
  double max_step = 0.0;
  /// First trial step; <= 0 selects it from the derivative norms.
  double initial_step = 0.0;
  long max_steps = 50'000'000;

  bool operator==(const IntegratorSettings&) const = default;
};

namespace dopri {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// 5th minus 4th order weights
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense output
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri

/// Integrate `ic` over [t0, tf] and sample the dense output at num_samples
/// equally spaced times (both ends included).
inline Trajectory integrate(const BenchmarkSystem& sys, const Vector& ic, double t0, double tf,
                            int num_samples, const IntegratorSettings& settings = {}) {
  using namespace dopri;
  if (!(tf > t0)) throw ValidationError("integrate: tf must exceed t0");
  if (num_samples < 2) throw ValidationError("integrate: num_samples must be >= 2");
  if (ic.size() != sys.state_dim) {
    throw DimensionError("integrate: initial condition has dimension " + std::to_string(ic.size()) +
                         ", system " + std::string(to_string(sys.id)) + " has S=" +
                         std::to_string(sys.state_dim));
  }
  if (!(settings.rel_tol > 0.0) || !(settings.abs_tol > 0.0)) {
    throw ValidationError("integrate: tolerances must be positive");
  }
  if (!ic.allFinite()) throw ValidationError("integrate: initial condition is not finite");

  const int n = sys.state_dim;
  const double span = tf - t0;
  const double dt = span / (num_samples - 1);
  const double max_step = settings.max_step > 0.0 ? settings.max_step : span;
  const double uround = std::numeric_limits<double>::epsilon();

  Matrix samples(n, num_samples);
  samples.col(0) = ic;
  int next_sample = 1;

  Vector y = ic, y1(n), ytmp(n), err(n);
  Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  Vector r1(n), r2(n), r3(n), r4(n), r5(n);
  double t = t0;

  auto f = [&](const Vector& x, Vector& out) {
    sys.rhs(x, out);
    if (!out.allFinite()) {
      throw IntegrationError("integrate: non-finite derivative at t=" + std::to_string(t), t);
    }
  };
  auto scale = [&](const Vector& a, const Vector& b) {
    return (settings.abs_tol + settings.rel_tol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };

  f(y, k1);
  double h = settings.initial_step;
  if (!(h > 0.0)) {
    // Hairer's starting-step heuristic
    const Vector sc = scale(y, y);
    const double dnf = (k1.array() / sc.array()).square().sum() / n;
    const double dny = (y.array() / sc.array()).square().sum() / n;
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, max_step);
    ytmp = y + h * k1;
    f(ytmp, k2);
    const double der2 = std::sqrt(((k2 - k1).array() / sc.array()).square().sum() / n) / h;
    const double der12 = std::max(der2, std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, max_step});
  }
  h = std::min(h, span);

  double err_old = 1e-4;
  long steps = 0;
  bool rejected = false;
  while (next_sample < num_samples) {
    if (++steps > settings.max_steps) {
      throw IntegrationError("integrate: exceeded " + std::to_string(settings.max_steps) +
                                 " steps at t=" + std::to_string(t),
                             t);
    }
    if (t + h > tf) h = tf - t;
    if (h < 10.0 * uround * std::max(1.0, std::abs(t))) {
      throw IntegrationError("integrate: step size underflow at t=" + std::to_string(t), t);
    }

    ytmp = y + h * a21 * k1;
    f(ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    f(ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(ytmp, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(y1, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const Vector sc = scale(y, y1);
    const double e = std::sqrt((err.array() / sc.array()).square().sum() / n);

    if (!std::isfinite(e)) {
      h *= 0.2;
      rejected = true;
      continue;
    }
    if (e <= 1.0) {
      // continuous extension on [t, t + h]
      r1 = y;
      r2 = y1 - y;
      r3 = h * k1 - r2;
      r4 = r2 - h * k7 - r3;
      r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      const double t_new = (t + h >= tf) ? tf : t + h;
      while (next_sample < num_samples) {
        const double ts = (next_sample == num_samples - 1) ? tf : t0 + next_sample * dt;
        if (ts > t_new) break;
        const double th = (ts - t) / h;
        const double th1 = 1.0 - th;
        samples.col(next_sample) = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
        ++next_sample;
      }
      t = t_new;
      y = y1;
      k1 = k7;
      // PI step-size control (Hairer: beta = 0.04)
      const double fac11 = std::pow(std::max(e, 1e-10), 0.2 - 0.04 * 0.75);
      double fac = fac11 / std::pow(err_old, 0.04);
      fac = std::clamp(fac / 0.9, 1.0 / 10.0, 1.0 / 0.2);
      double h_new = h / fac;
      if (rejected) h_new = std::min(h_new, h);
      err_old = std::max(e, 1e-4);
      rejected = false;
      h = std::min(h_new, max_step);
    } else {
      const double fac11 = std::pow(e, 0.2 - 0.04 * 0.75);
      h /= std::min(1.0 / 0.2, fac11 / 0.9);
      rejected = true;
    }
  }
  return Trajectory(std::move(samples), dt, t0);
}

// ---------------------------------------------------------------------------
// Noise

/// Add N(0, sigma_n^2) to every entry of channel n, with sigma_n equal to
/// sigma_pct percent of that channel's range (max - min) in `traj`.
inline Trajectory add_noise(const Trajectory& traj, double sigma_pct, std::uint64_t seed) {
  if (!(sigma_pct >= 0.0) || !std::isfinite(sigma_pct)) {
    throw ValidationError("add_noise: sigma_pct must be a finite non-negative number");
  }
  Matrix out = traj.states();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    const double range = out.row(c).maxCoeff() - out.row(c).minCoeff();
    const double sigma = sigma_pct / 100.0 * range;
    if (!(sigma > 0.0)) continue;
    for (Eigen::Index k = 0; k < out.cols(); ++k) out(c, k) += sigma * normal(rng);
  }
  return traj.with_states(std::move(out), Provenance::noisy(sigma_pct, seed));
}

}  // namespace nldm
