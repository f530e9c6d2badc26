#pragma once

// Command-line front end: `nldm <verb> [flags]` with verbs simulate, train,
// predict, evaluate, basin, run. Exit codes: 0 success, 2 config or usage
// error, 3 numerical or pipeline error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nldm/experiment.hpp"

namespace nldm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  // predict without a config
  std::string seeds;
  long steps = -1;
};

inline unsigned resolve_threads(unsigned flag) { return flag > 0 ? flag : default_threads(); }

inline ExperimentConfig load(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required for this verb");
  ExperimentConfig c = load_config(f.config);
  if (f.seed) c.global_seed = *f.seed;
  return c;
}

inline RunOptions run_options(const Flags& f, const ExperimentConfig* c, std::ostream& err) {
  RunOptions o;
  o.threads = resolve_threads(f.threads);
  o.out_dir = !f.out.empty() ? std::filesystem::path(f.out)
                             : std::filesystem::path(c ? c->output_dir : std::string("."));
  o.log = &err;
  return o;
}

inline LearnedOperator load_model_for(const Flags& f, const RunOptions& o) {
  return io::read_model(f.model.empty() ? model_path(o.out_dir) : std::filesystem::path(f.model));
}

inline void report(std::ostream& out, const std::string& verb, const std::filesystem::path& dir) {
  out << verb << ": wrote artifacts to " << dir.string() << '\n';
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"nldm: nonlinear delayed-map system identification", "nldm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NLDM_VERSION);
  Flags f;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", f.config, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", f.out, "output directory (defaults to the config's output_dir)");
    sub->add_option("--seed", f.seed, "override global_seed");
    sub->add_option("--threads", f.threads, "worker threads (default: NLDM_THREADS or all cores)");
  };
  auto* simulate = app.add_subcommand("simulate", "integrate train/test entries, write clean and noisy CSVs");
  common(simulate, true);
  auto* train_cmd = app.add_subcommand("train", "fit the operator; write model.txt and train_metrics.json");
  common(train_cmd, true);
  auto* predict_cmd = app.add_subcommand("predict", "iterate a model from seed states");
  common(predict_cmd, false);
  predict_cmd->add_option("--model", f.model, "model file")->required();
  predict_cmd->add_option("--seeds", f.seeds, "trajectory CSV whose first d rows are the seed states");
  predict_cmd->add_option("--steps", f.steps, "number of predicted states");
  auto* evaluate = app.add_subcommand("evaluate", "score a model on the test entries");
  common(evaluate, true);
  evaluate->add_option("--model", f.model, "model file (defaults to <out>/model.txt)");
  auto* basin = app.add_subcommand("basin", "basin rasters and agreement");
  common(basin, true);
  basin->add_option("--model", f.model, "model file; omit for the truth raster only");
  auto* run = app.add_subcommand("run", "simulate, train, evaluate, basin and write a manifest");
  common(run, true);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      const auto c = load(f);
      const auto o = run_options(f, &c, err);
      stage_simulate(c, o);
      report(out, "simulate", o.out_dir);
    } else if (train_cmd->parsed()) {
      const auto c = load(f);
      const auto o = run_options(f, &c, err);
      const auto r = stage_train(c, o);
      out << "train: mean_rrmse " << r.metrics["mean_rrmse"].dump() << '\n';
      report(out, "train", o.out_dir);
    } else if (evaluate->parsed()) {
      const auto c = load(f);
      const auto o = run_options(f, &c, err);
      const auto m = stage_evaluate(c, load_model_for(f, o), o);
      out << "evaluate: mean_rrmse " << m["mean_rrmse"].dump() << '\n';
      report(out, "evaluate", o.out_dir);
    } else if (basin->parsed()) {
      const auto c = load(f);
      const auto o = run_options(f, &c, err);
      std::optional<LearnedOperator> op;
      if (!f.model.empty()) op = io::read_model(f.model);
      const auto j = stage_basin(c, op, o);
      if (j.contains("fraction_agree")) out << "basin: agreement " << j["fraction_agree"].dump() << '\n';
      report(out, "basin", o.out_dir);
    } else if (predict_cmd->parsed()) {
      const LearnedOperator op = io::read_model(f.model);
      if (!f.seeds.empty()) {
        if (f.steps < 0) throw ConfigError("--steps is required with --seeds");
        const auto o = run_options(f, nullptr, err);
        const Trajectory seeds = io::read_trajectory(f.seeds);
        const int d = op.config().delay();
        if (seeds.size() < d) throw TooShortError("--seeds has fewer than d=" + std::to_string(d) + " rows");
        PredictOptions po;
        po.t0 = seeds.t0();
        const Prediction p = predict(op, seeds.states().leftCols(d), f.steps, po);
        io::write_trajectory(o.out_dir / "prediction.csv", p.trajectory);
        write_json(o.out_dir / "prediction.json",
                   {{"steps", p.steps_requested},
                    {"diverged", p.diverged_at.has_value()},
                    {"diverged_at", p.diverged_at ? json(*p.diverged_at) : json(nullptr)}});
        report(out, "predict", o.out_dir);
      } else {
        // test entries of a config, without scoring
        const auto c = load(f);
        const auto o = run_options(f, &c, err);
        check_operator_for(op, c);
        const Dataset ds = load_or_simulate(c, Role::test, o);
        const int d = op.config().delay();
        PredictOptions po;
        po.divergence_threshold = c.model.divergence_threshold;
        for (std::size_t i = 0; i < ds.noisy.size(); ++i) {
          if (ds.noisy[i].size() < d) throw TooShortError("test entry shorter than d");
          po.t0 = ds.noisy[i].t0();
          const Eigen::Index steps = f.steps >= 0 ? f.steps : ds.noisy[i].size() - d;
          const Prediction p = predict(op, ds.noisy[i].states().leftCols(d), steps, po);
          io::write_trajectory(prediction_path(o.out_dir, i), p.trajectory);
        }
        report(out, "predict", o.out_dir);
      }
    } else if (run->parsed()) {
      const auto c = load(f);
      const auto o = run_options(f, &c, err);
      run_experiment(c, o);
      report(out, "run", o.out_dir);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace nldm::cli
