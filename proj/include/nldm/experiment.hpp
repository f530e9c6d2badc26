#pragma once

// Declarative experiment configs (JSON) and the stages that turn one into
// artifacts: simulate, train, evaluate, basin. Every stage takes the config
// and an output directory; the CLI is a thin wrapper over these functions.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nldm/basin.hpp"
#include "nldm/core.hpp"
#include "nldm/identify.hpp"
#include "nldm/io.hpp"
#include "nldm/metrics.hpp"
#include "nldm/odes.hpp"
#include "nldm/predict.hpp"

#ifndef NLDM_VERSION
#define NLDM_VERSION "0.1.0"
#endif

namespace nldm {

using json = nlohmann::json;

struct NoiseSpec {
  double sigma_pct = 0.0;
  /// Explicit seed; when absent one is derived from the global seed.
  std::optional<std::uint64_t> seed;
  bool operator==(const NoiseSpec&) const = default;
};

struct TrajectorySpec {
  std::vector<double> ic;
  double t0 = 0.0;
  double tf = 1.0;
  int num_samples = 2;
  NoiseSpec noise;
  bool operator==(const TrajectorySpec&) const = default;

  double dt() const { return (tf - t0) / (num_samples - 1); }
};

struct ModelSpec {
  int d = 1;
  int o = 1;
  double rcond = 0.0;
  double divergence_threshold = 1e6;
  bool operator==(const ModelSpec&) const = default;
};

struct BasinSpec {
  std::array<double, 4> window{-1.0, 1.0, -1.0, 1.0};  // x_lo, x_hi, y_lo, y_hi
  int resolution = 2;
  int steps = 1000;
  double tol = 0.05;
  int persist = 10;
  double horizon = 20.0;
  int samples = 1001;
  std::array<int, 2> axes{0, 1};
  std::vector<double> base;
  bool operator==(const BasinSpec&) const = default;

  GridSpec grid() const {
    GridSpec g;
    g.x_lo = window[0];
    g.x_hi = window[1];
    g.y_lo = window[2];
    g.y_hi = window[3];
    g.resolution = resolution;
    g.axes = axes;
    if (!base.empty()) g.base = Eigen::Map<const Vector>(base.data(), static_cast<Eigen::Index>(base.size()));
    return g;
  }
};

struct ExperimentConfig {
  SystemId system = SystemId::LHO;
  std::map<std::string, double> params;  // overrides only
  IntegratorSettings integrator;
  std::vector<TrajectorySpec> train;
  std::vector<TrajectorySpec> test;
  ModelSpec model;
  std::optional<BasinSpec> basin;
  std::string output_dir = "out";
  std::uint64_t global_seed = 0;
  bool operator==(const ExperimentConfig&) const = default;

  BenchmarkSystem make() const { return make_system(system, params); }
  FeatureConfig features() const { return FeatureConfig(make().state_dim, model.d, model.o); }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline void only_keys(const json& obj, const std::string& path,
                      std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(path + "." + key + ": unknown field");
  }
}

inline const json& need(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(path + "." + key + ": required field missing");
  return obj.at(key);
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path + ": must be finite");
  return x;
}

inline long long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<long long>();
}

inline std::uint64_t as_seed(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(path + ": expected a non-negative integer seed");
}

inline std::vector<double> as_numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <typename T>
T opt(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  const std::string p = path + "." + key;
  if constexpr (std::is_same_v<T, double>) {
    return as_number(obj.at(key), p);
  } else {
    const long long v = as_integer(obj.at(key), p);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw ConfigError(p + ": out of range");
    }
    return static_cast<T>(v);
  }
}

inline TrajectorySpec parse_entry(const json& e, const std::string& path, int state_dim, int d) {
  only_keys(e, path, {"ic", "t_span", "num_samples", "noise"});
  TrajectorySpec t;
  t.ic = as_numbers(need(e, "ic", path), path + ".ic");
  if (static_cast<int>(t.ic.size()) != state_dim) {
    throw ConfigError(path + ".ic: has " + std::to_string(t.ic.size()) + " components, system has S=" +
                      std::to_string(state_dim));
  }
  const auto span = as_numbers(need(e, "t_span", path), path + ".t_span");
  if (span.size() != 2) throw ConfigError(path + ".t_span: expected [t0, tf]");
  t.t0 = span[0];
  t.tf = span[1];
  if (!(t.tf > t.t0)) throw ConfigError(path + ".t_span: tf must exceed t0");
  const long long k = as_integer(need(e, "num_samples", path), path + ".num_samples");
  if (k < 2 || k <= d || k > std::numeric_limits<int>::max()) {
    throw ConfigError(path + ".num_samples: must be >= 2 and exceed d=" + std::to_string(d));
  }
  t.num_samples = static_cast<int>(k);
  if (e.contains("noise")) {
    const auto& n = e.at("noise");
    const std::string np = path + ".noise";
    only_keys(n, np, {"sigma_pct", "seed"});
    t.noise.sigma_pct = opt(n, "sigma_pct", np, 0.0);
    if (t.noise.sigma_pct < 0.0) throw ConfigError(np + ".sigma_pct: must be >= 0");
    if (n.contains("seed")) t.noise.seed = as_seed(n.at("seed"), np + ".seed");
  }
  return t;
}

}  // namespace detail

/// Build and validate a config. Problems raise ConfigError naming the field.
/// Uniform spacing across entries is not required here; it is enforced when
/// trajectories are assembled for training.
inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  only_keys(j, "config",
            {"system", "integrator", "train", "test", "model", "basin", "output_dir", "global_seed"});
  ExperimentConfig c;

  const auto& sys = need(j, "system", "config");
  only_keys(sys, "system", {"id", "params"});
  const auto& id = need(sys, "id", "system");
  if (!id.is_string()) throw ConfigError("system.id: expected a string");
  const auto parsed = parse_system_id(id.get<std::string>());
  if (!parsed) throw ConfigError("system.id: unknown system '" + id.get<std::string>() + "'");
  c.system = *parsed;
  if (sys.contains("params")) {
    const auto& p = sys.at("params");
    if (!p.is_object()) throw ConfigError("system.params: expected an object");
    for (const auto& [k, v] : p.items()) c.params[k] = as_number(v, "system.params." + k);
  }
  BenchmarkSystem bs;
  try {
    bs = c.make();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("system.params: ") + e.what());
  }

  if (j.contains("integrator")) {
    const auto& in = j.at("integrator");
    only_keys(in, "integrator", {"rel_tol", "abs_tol", "max_step", "initial_step", "max_steps"});
    c.integrator.rel_tol = opt(in, "rel_tol", "integrator", c.integrator.rel_tol);
    c.integrator.abs_tol = opt(in, "abs_tol", "integrator", c.integrator.abs_tol);
    c.integrator.max_step = opt(in, "max_step", "integrator", c.integrator.max_step);
    c.integrator.initial_step = opt(in, "initial_step", "integrator", c.integrator.initial_step);
    if (in.contains("max_steps")) {
      c.integrator.max_steps = as_integer(in.at("max_steps"), "integrator.max_steps");
      if (c.integrator.max_steps < 1) throw ConfigError("integrator.max_steps: must be >= 1");
    }
    if (!(c.integrator.rel_tol > 0.0)) throw ConfigError("integrator.rel_tol: must be > 0");
    if (!(c.integrator.abs_tol > 0.0)) throw ConfigError("integrator.abs_tol: must be > 0");
  }

  const auto& m = need(j, "model", "config");
  only_keys(m, "model", {"d", "o", "rcond", "divergence_threshold"});
  need(m, "d", "model");
  need(m, "o", "model");
  c.model.d = opt(m, "d", "model", 0);
  c.model.o = opt(m, "o", "model", 0);
  if (c.model.d < 1) throw ConfigError("model.d: must be >= 1");
  if (c.model.o < 1) throw ConfigError("model.o: must be >= 1");
  c.model.rcond = opt(m, "rcond", "model", 0.0);
  if (c.model.rcond < 0.0) throw ConfigError("model.rcond: must be >= 0");
  c.model.divergence_threshold = opt(m, "divergence_threshold", "model", 1e6);
  if (!(c.model.divergence_threshold > 0.0)) {
    throw ConfigError("model.divergence_threshold: must be > 0");
  }
  try {
    (void)FeatureConfig(bs.state_dim, c.model.d, c.model.o);
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  for (const char* role : {"train", "test"}) {
    auto& list = std::string(role) == "train" ? c.train : c.test;
    if (!j.contains(role)) continue;
    const auto& arr = j.at(role);
    if (!arr.is_array()) throw ConfigError(std::string(role) + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      list.push_back(parse_entry(arr[i], std::string(role) + "[" + std::to_string(i) + "]",
                                 bs.state_dim, c.model.d));
    }
  }
  if (c.train.empty()) throw ConfigError("train: at least one entry is required");

  if (j.contains("basin") && !j.at("basin").is_null()) {
    const auto& b = j.at("basin");
    only_keys(b, "basin",
              {"window", "resolution", "steps", "tol", "persist", "horizon", "samples", "axes", "base"});
    BasinSpec s;
    const auto w = as_numbers(need(b, "window", "basin"), "basin.window");
    if (w.size() != 4) throw ConfigError("basin.window: expected [x_lo, x_hi, y_lo, y_hi]");
    std::copy(w.begin(), w.end(), s.window.begin());
    if (!(s.window[1] > s.window[0]) || !(s.window[3] > s.window[2])) {
      throw ConfigError("basin.window: bounds must satisfy lo < hi");
    }
    s.resolution = static_cast<int>(as_integer(need(b, "resolution", "basin"), "basin.resolution"));
    if (s.resolution < 2) throw ConfigError("basin.resolution: must be >= 2");
    s.steps = opt(b, "steps", "basin", s.steps);
    if (s.steps < 1) throw ConfigError("basin.steps: must be >= 1");
    s.tol = opt(b, "tol", "basin", s.tol);
    if (!(s.tol > 0.0)) throw ConfigError("basin.tol: must be > 0");
    s.persist = opt(b, "persist", "basin", s.persist);
    if (s.persist < 1) throw ConfigError("basin.persist: must be >= 1");
    s.horizon = opt(b, "horizon", "basin", s.horizon);
    if (!(s.horizon > 0.0)) throw ConfigError("basin.horizon: must be > 0");
    s.samples = opt(b, "samples", "basin", s.samples);
    if (s.samples < 2) throw ConfigError("basin.samples: must be >= 2");
    if (b.contains("axes")) {
      const auto& a = b.at("axes");
      if (!a.is_array() || a.size() != 2) throw ConfigError("basin.axes: expected two indices");
      for (int q = 0; q < 2; ++q) {
        const long long v = as_integer(a[q], "basin.axes[" + std::to_string(q) + "]");
        if (v < 0 || v >= bs.state_dim) throw ConfigError("basin.axes: index out of range");
        s.axes[q] = static_cast<int>(v);
      }
      if (s.axes[0] == s.axes[1]) throw ConfigError("basin.axes: indices must differ");
    }
    if (b.contains("base")) {
      s.base = as_numbers(b.at("base"), "basin.base");
      if (!s.base.empty() && static_cast<int>(s.base.size()) != bs.state_dim) {
        throw ConfigError("basin.base: must have S=" + std::to_string(bs.state_dim) + " components");
      }
    }
    if (bs.state_dim > 2 && s.base.empty() && !b.contains("axes")) {
      throw ConfigError("basin: system has S>2; declare a slice with axes and base");
    }
    c.basin = s;
  }

  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir: expected a string");
    c.output_dir = j.at("output_dir").get<std::string>();
  }
  if (j.contains("global_seed")) c.global_seed = as_seed(j.at("global_seed"), "global_seed");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Canonical form: every field written out, defaults included.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["system"]["id"] = std::string(to_string(c.system));
  j["system"]["params"] = json::object();
  for (const auto& [k, v] : c.params) j["system"]["params"][k] = v;
  j["integrator"] = {{"rel_tol", c.integrator.rel_tol},
                     {"abs_tol", c.integrator.abs_tol},
                     {"max_step", c.integrator.max_step},
                     {"initial_step", c.integrator.initial_step},
                     {"max_steps", c.integrator.max_steps}};
  auto entries = [](const std::vector<TrajectorySpec>& list) {
    json arr = json::array();
    for (const auto& t : list) {
      json e = {{"ic", t.ic}, {"t_span", {t.t0, t.tf}}, {"num_samples", t.num_samples}};
      e["noise"]["sigma_pct"] = t.noise.sigma_pct;
      if (t.noise.seed) e["noise"]["seed"] = *t.noise.seed;
      arr.push_back(e);
    }
    return arr;
  };
  j["train"] = entries(c.train);
  j["test"] = entries(c.test);
  j["model"] = {{"d", c.model.d},
                {"o", c.model.o},
                {"rcond", c.model.rcond},
                {"divergence_threshold", c.model.divergence_threshold}};
  if (c.basin) {
    const auto& b = *c.basin;
    j["basin"] = {{"window", b.window}, {"resolution", b.resolution}, {"steps", b.steps},
                  {"tol", b.tol},       {"persist", b.persist},       {"horizon", b.horizon},
                  {"samples", b.samples}, {"axes", b.axes},           {"base", b.base}};
  }
  j["output_dir"] = c.output_dir;
  j["global_seed"] = c.global_seed;
  return j;
}

// ---------------------------------------------------------------------------
// Seeds

enum class Role { train, test };

inline const char* role_name(Role r) { return r == Role::train ? "train" : "test"; }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Noise seed actually used for an entry.
inline std::uint64_t entry_seed(const ExperimentConfig& c, Role role, std::size_t index) {
  const auto& list = role == Role::train ? c.train : c.test;
  if (list.at(index).noise.seed) return *list[index].noise.seed;
  const std::uint64_t tag = (role == Role::train ? 1ull : 2ull) << 32 | index;
  return splitmix64(splitmix64(c.global_seed) ^ tag);
}

// ---------------------------------------------------------------------------
// Stages

struct Dataset {
  std::vector<Trajectory> clean;
  std::vector<Trajectory> noisy;
};

struct RunOptions {
  unsigned threads = 1;
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
};

inline std::filesystem::path trajectory_path(const std::filesystem::path& dir, Role role,
                                             std::size_t i, bool noisy) {
  return dir / (std::string(role_name(role)) + "_" + std::to_string(i) + (noisy ? "_noisy" : "_clean") + ".csv");
}

inline std::filesystem::path prediction_path(const std::filesystem::path& dir, std::size_t i) {
  return dir / ("test_" + std::to_string(i) + "_pred.csv");
}

inline std::filesystem::path model_path(const std::filesystem::path& dir) { return dir / "model.txt"; }

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = io::open_out(path);
  out << j.dump(2) << '\n';
}

/// NaN and infinities become null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline Dataset simulate_entries(const ExperimentConfig& c, Role role, unsigned threads) {
  const auto sys = c.make();
  const auto& list = role == Role::train ? c.train : c.test;
  Dataset out;
  std::vector<std::optional<Trajectory>> clean(list.size()), noisy(list.size());
  parallel_for(list.size(), threads, [&](std::size_t i) {
    const auto& e = list[i];
    const Vector ic = Eigen::Map<const Vector>(e.ic.data(), static_cast<Eigen::Index>(e.ic.size()));
    clean[i] = integrate(sys, ic, e.t0, e.tf, e.num_samples, c.integrator);
    noisy[i] = e.noise.sigma_pct > 0.0 ? add_noise(*clean[i], e.noise.sigma_pct, entry_seed(c, role, i))
                                       : *clean[i];
  });
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.clean.push_back(std::move(*clean[i]));
    out.noisy.push_back(std::move(*noisy[i]));
  }
  return out;
}

/// Integrate every train and test entry and write clean and noisy CSVs.
inline std::vector<std::filesystem::path> stage_simulate(const ExperimentConfig& c, const RunOptions& opt) {
  std::vector<std::filesystem::path> written;
  for (Role role : {Role::train, Role::test}) {
    const Dataset ds = simulate_entries(c, role, opt.threads);
    for (std::size_t i = 0; i < ds.clean.size(); ++i) {
      for (bool noisy : {false, true}) {
        const auto p = trajectory_path(opt.out_dir, role, i, noisy);
        io::write_trajectory(p, noisy ? ds.noisy[i] : ds.clean[i]);
        written.push_back(p);
      }
    }
  }
  return written;
}

/// Entries whose CSVs are already present in the output directory are read
/// back; the rest are simulated.
inline Dataset load_or_simulate(const ExperimentConfig& c, Role role, const RunOptions& opt) {
  const auto& list = role == Role::train ? c.train : c.test;
  Dataset ds;
  std::optional<Dataset> generated;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto pc = trajectory_path(opt.out_dir, role, i, false);
    const auto pn = trajectory_path(opt.out_dir, role, i, true);
    if (std::filesystem::exists(pc) && std::filesystem::exists(pn)) {
      ds.clean.push_back(io::read_trajectory(pc));
      ds.noisy.push_back(io::read_trajectory(pn));
    } else {
      if (!generated) generated = simulate_entries(c, role, opt.threads);
      ds.clean.push_back(generated->clean[i]);
      ds.noisy.push_back(generated->noisy[i]);
    }
  }
  return ds;
}

inline TrainOptions train_options(const ExperimentConfig& c, unsigned threads) {
  TrainOptions o;
  o.threads = threads;
  o.rcond = c.model.rcond;
  o.predict.divergence_threshold = c.model.divergence_threshold;
  return o;
}

inline json training_metrics(const TrainingResult& r) {
  json per = json::array();
  json diverged = json::array();
  for (double v : r.per_trajectory_rrmse) {
    per.push_back(number_or_null(v));
    diverged.push_back(!std::isfinite(v));
  }
  return {{"per_trajectory_rrmse", per},
          {"diverged", diverged},
          {"mean_rrmse", number_or_null(r.mean_rrmse)},
          {"pooled_rrmse", number_or_null(r.pooled_rrmse)},
          {"residual_frobenius", r.lstsq.residual_frobenius},
          {"effective_rank", r.lstsq.effective_rank},
          {"feature_dim", r.op.config().feature_dim()},
          {"columns", r.op.summary().total_columns},
          {"underdetermined", r.underdetermined},
          {"warnings", r.warnings},
          {"elapsed_seconds", r.elapsed_seconds}};
}

struct TrainStageResult {
  LearnedOperator op;
  json metrics;
};

/// Fit Lambda on the (noisy) training data, score against the clean data,
/// write model.txt and train_metrics.json.
inline TrainStageResult stage_train(const ExperimentConfig& c, const RunOptions& opt) {
  const Dataset ds = load_or_simulate(c, Role::train, opt);
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < ds.clean.size(); ++i) samples.push_back({ds.noisy[i], ds.clean[i]});
  const TrainingResult r = train(std::span<const TrainingSample>(samples), c.features(),
                                 train_options(c, opt.threads));
  if (opt.log) {
    for (const auto& w : r.warnings) *opt.log << "warning: " << w << '\n';
  }
  io::write_model(model_path(opt.out_dir), r.op);
  json metrics = training_metrics(r);
  write_json(opt.out_dir / "train_metrics.json", metrics);
  return {r.op, metrics};
}

inline json score_json(const SkillScore& s) {
  json per = json::array();
  for (double v : s.per_state_rrmse) per.push_back(number_or_null(v));
  return {{"per_state_rrmse", per},
          {"rrmse", number_or_null(s.mean_rrmse)},
          {"diverged", s.diverged()},
          {"compared_points", s.compared_points}};
}

inline void check_operator_for(const LearnedOperator& op, const ExperimentConfig& c) {
  const int s = c.make().state_dim;
  if (op.config().state_dim() != s) {
    throw DimensionError("model has S=" + std::to_string(op.config().state_dim()) + " but system " +
                         std::string(to_string(c.system)) + " has S=" + std::to_string(s));
  }
}

/// Predict each test entry from its first d (noisy) states and score against
/// the clean trajectory. Writes test_<i>_pred.csv and eval_metrics.json.
inline json stage_evaluate(const ExperimentConfig& c, const LearnedOperator& op, const RunOptions& opt) {
  check_operator_for(op, c);
  const Dataset ds = load_or_simulate(c, Role::test, opt);
  const int d = op.config().delay();
  const MonomialBasis basis(op.config());
  PredictOptions po;
  po.divergence_threshold = c.model.divergence_threshold;
  json tests = json::array();
  double sum = 0.0;
  int scored = 0, diverged = 0;
  for (std::size_t i = 0; i < ds.clean.size(); ++i) {
    const auto& noisy = ds.noisy[i];
    const auto& clean = ds.clean[i];
    if (!same_dt(noisy.dt(), op.dt())) {
      throw IncompatibleError("test[" + std::to_string(i) + "]: dt differs from the model's dt");
    }
    if (noisy.size() <= d) {
      throw TooShortError("test[" + std::to_string(i) + "]: needs more than d=" + std::to_string(d) + " samples");
    }
    po.t0 = noisy.t0();
    const Prediction p = predict(op, basis, noisy.states().leftCols(d), noisy.size() - d, po);
    io::write_trajectory(prediction_path(opt.out_dir, i), p.trajectory);
    json entry = {{"index", i}, {"ic", c.test[i].ic}};
    entry["diverged_at"] = p.diverged_at ? json(*p.diverged_at) : json(nullptr);
    try {
      const SkillScore s = rrmse(p.trajectory, clean, d);
      entry.update(score_json(s));
      entry["undefined"] = false;
      if (s.diverged()) {
        ++diverged;
      } else {
        sum += s.mean_rrmse;
        ++scored;
      }
    } catch (const UndefinedScoreError& e) {
      entry["rrmse"] = nullptr;
      entry["diverged"] = p.diverged_at.has_value();
      entry["undefined"] = true;
      entry["reason"] = e.what();
      if (p.diverged_at) ++diverged;
    }
    tests.push_back(entry);
  }
  json metrics = {{"tests", tests}, {"diverged_count", diverged}, {"scored_count", scored}};
  metrics["mean_rrmse"] =
      (scored > 0 && diverged == 0 && scored == static_cast<int>(ds.clean.size())) ? json(sum / scored) : json(nullptr);
  metrics["mean_rrmse_finite"] = scored > 0 ? json(sum / scored) : json(nullptr);
  write_json(opt.out_dir / "eval_metrics.json", metrics);
  return metrics;
}

inline json label_counts(const BasinGrid& g) {
  std::map<int, long> counts;
  for (int l : g.labels) ++counts[l];
  json out = json::object();
  for (const auto& [l, n] : counts) out[std::to_string(l)] = n;
  return out;
}

/// Truth raster, plus the operator raster and agreement when a model is
/// supplied. Writes basin_truth.csv, basin_operator.csv, basin_agreement.json.
inline json stage_basin(const ExperimentConfig& c, const std::optional<LearnedOperator>& op,
                        const RunOptions& opt) {
  if (!c.basin) throw ConfigError("basin: section missing from config");
  const auto& b = *c.basin;
  const auto sys = c.make();
  const GridSpec spec = b.grid();
  TruthGridOptions to;
  to.horizon = b.horizon;
  to.samples = b.samples;
  to.capture = {b.tol, b.persist};
  to.integrator = c.integrator;
  to.threads = opt.threads;
  const BasinGrid truth = ground_truth_grid(sys, spec, to);
  io::write_basin(opt.out_dir / "basin_truth.csv", truth);

  json j = {{"attractors", truth.attractor_names},
            {"labels", {{"unresolved", kUnresolved}, {"diverged", kDivergedLabel}}},
            {"truth_counts", label_counts(truth)}};
  if (op) {
    check_operator_for(*op, c);
    OperatorGridOptions oo;
    oo.steps = b.steps;
    oo.capture = {b.tol, b.persist};
    oo.predict.divergence_threshold = c.model.divergence_threshold;
    oo.threads = opt.threads;
    const BasinGrid learned = operator_grid(*op, sys, spec, oo);
    io::write_basin(opt.out_dir / "basin_operator.csv", learned);
    const GridAgreement a = grid_agreement(truth, learned);
    json confusion = json::array();
    for (const auto& [key, n] : a.confusion) {
      confusion.push_back({{"truth", key.first}, {"operator", key.second}, {"count", n}});
    }
    j["operator_counts"] = label_counts(learned);
    j["fraction_agree"] = a.fraction_agree;
    j["compared_cells"] = a.compared_cells;
    j["confusion"] = confusion;
    j["note"] = learned.note;
  }
  write_json(opt.out_dir / "basin_agreement.json", j);
  return j;
}

inline json seed_record(const ExperimentConfig& c) {
  json seeds = json::array();
  for (Role role : {Role::train, Role::test}) {
    const auto& list = role == Role::train ? c.train : c.test;
    for (std::size_t i = 0; i < list.size(); ++i) {
      seeds.push_back({{"role", role_name(role)},
                       {"index", i},
                       {"sigma_pct", list[i].noise.sigma_pct},
                       {"seed", entry_seed(c, role, i)},
                       {"explicit", list[i].noise.seed.has_value()}});
    }
  }
  return seeds;
}

inline json version_record() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"nldm", NLDM_VERSION},
          {"eigen", eigen.str()},
#if defined(__VERSION__)
          {"compiler", __VERSION__},
#endif
          {"cxx_standard", __cplusplus}};
}

/// simulate -> train -> evaluate -> basin, then manifest.json.
inline json run_experiment(const ExperimentConfig& c, const RunOptions& opt) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };
  json timings;
  std::vector<std::string> artifacts;
  auto note = [&](const std::filesystem::path& p) {
    artifacts.push_back(std::filesystem::relative(p, opt.out_dir).generic_string());
  };

  auto t = clock::now();
  for (const auto& p : stage_simulate(c, opt)) note(p);
  timings["simulate"] = seconds(t);

  t = clock::now();
  const TrainStageResult tr = stage_train(c, opt);
  timings["train"] = seconds(t);
  note(model_path(opt.out_dir));
  note(opt.out_dir / "train_metrics.json");

  if (!c.test.empty()) {
    t = clock::now();
    stage_evaluate(c, tr.op, opt);
    timings["evaluate"] = seconds(t);
    for (std::size_t i = 0; i < c.test.size(); ++i) note(prediction_path(opt.out_dir, i));
    note(opt.out_dir / "eval_metrics.json");
  }
  if (c.basin) {
    t = clock::now();
    stage_basin(c, tr.op, opt);
    timings["basin"] = seconds(t);
    note(opt.out_dir / "basin_truth.csv");
    note(opt.out_dir / "basin_operator.csv");
    note(opt.out_dir / "basin_agreement.json");
  }

  json manifest = {{"config", to_json(c)},
                   {"global_seed", c.global_seed},
                   {"seeds", seed_record(c)},
                   {"versions", version_record()},
                   {"threads", opt.threads},
                   {"timings_seconds", timings},
                   {"artifacts", artifacts}};
  write_json(opt.out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace nldm
