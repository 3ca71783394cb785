#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "cdseg/config/experiment.hpp"
#include "cdseg/evaluation/plots.hpp"
#include "cdseg/evaluation/report.hpp"

namespace cdseg::cli {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"synth", "train", "eval", "sweep", "compare", "plot"};
  return names;
}

struct Options {
  std::string preset = "tiny";
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::optional<fs::path> out;         // output root, wins over the environment and config
  std::optional<fs::path> checkpoint;  // eval / noise sweep
  std::string kind = "noise";          // sweep kind
  bool resume = false;
  bool predictions = false;
  std::optional<fs::path> results;     // plot input directory
};

inline ExperimentConfig resolve(const Options& o) {
  auto sets = o.sets;
  if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
  auto cfg = config::load_config(o.preset, o.config, sets);
  if (o.out) cfg.output_dir = o.out->string();
  else cfg.output_dir = config::output_root(cfg).string();
  return cfg;
}

inline void snapshot(const ExperimentConfig& cfg, const fs::path& dir) {
  evaluation::write_json(config::write(cfg), dir / "config.resolved.json");
}

inline fs::path section(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path dir = fs::path(cfg.output_dir) / name;
  fs::create_directories(dir);
  return dir;
}

struct Splits {
  std::vector<training::PreparedScene> train, val;
  geometry::Dataset val_raw;
};

inline Splits load_splits(const ExperimentConfig& cfg) {
  const auto data = config::make_dataset(cfg);
  Splits s;
  s.train = evaluation::prepare_all(geometry::filter_split(data, "train"), cfg.train.voxel_size);
  s.val_raw = geometry::filter_split(data, "val");
  s.val = evaluation::prepare_all(s.val_raw, cfg.train.voxel_size);
  return s;
}

inline fs::path cmd_synth(const ExperimentConfig& cfg) {
  const auto dir = section(cfg, "synth");
  geometry::save_dataset(config::synthesize(cfg.data, cfg.seed), dir / "data");
  snapshot(cfg, dir);
  return dir / "data";
}

inline fs::path cmd_train(const ExperimentConfig& cfg, bool resume) {
  const auto dir = section(cfg, "train");
  snapshot(cfg, dir);
  const auto splits = load_splits(cfg);
  training::LoopOptions opt;
  opt.out_dir = dir;
  opt.resume = resume;
  auto tm = evaluation::train_model(cfg.run(), splits.train, splits.val, opt);
  json summary{{"total_steps", tm.loop.total_steps},
               {"best_miou", tm.loop.best_miou},
               {"best_step", tm.loop.best_step},
               {"final_loss", tm.loop.steps.empty() ? json(nullptr) : json(tm.loop.steps.back().total)},
               {"parameters", tm.model().parameter_count()}};
  evaluation::write_json(summary, dir / "summary.json");
  return dir;
}

inline fs::path default_checkpoint(const ExperimentConfig& cfg) {
  const fs::path dir = fs::path(cfg.output_dir) / "train";
  if (fs::exists(dir / "best.ckpt")) return dir / "best.ckpt";
  return dir / "last.ckpt";
}

/// Loads a checkpoint and checks that it matches the configured network and
/// schedule.
inline std::unique_ptr<evaluation::Model> load_checked(const ExperimentConfig& cfg, const fs::path& path) {
  const auto f = training::read_checkpoint(path);
  if (f.header.at("schedule") != config::write(cfg.schedule))
    throw ConsistencyError("checkpoint " + path.string() + ": schedule differs from the configured schedule");
  if (f.header.at("network") != config::write(cfg.network))
    throw ConsistencyError("checkpoint " + path.string() + ": network differs from the configured network");
  return training::load_model<float>(f);
}

inline evaluation::MetricsReport cmd_eval(const ExperimentConfig& cfg, const std::optional<fs::path>& ckpt, bool predictions,
                                          fs::path* written = nullptr) {
  const auto dir = section(cfg, "eval");
  snapshot(cfg, dir);
  auto model = load_checked(cfg, ckpt.value_or(default_checkpoint(cfg)));
  const auto sched = cfg.schedule.build();
  const auto splits = load_splits(cfg);
  const auto spec = evaluation::resolve_inference(cfg.run());
  evaluation::ConfusionMatrix cm(cfg.network.num_classes);
  for (std::size_t i = 0; i < splits.val.size(); ++i) {
    auto s = spec;
    s.seed = spec.seed + i;
    auto p = inference::infer(*model, splits.val[i], sched, s);
    cm.accumulate(splits.val[i].point_labels, p.point_labels);
    if (predictions) inference::save_prediction(splits.val_raw[i].cloud, p, dir / (splits.val_raw[i].name + ".pred.txt"));
  }
  const auto m = evaluation::metrics(cm);
  evaluation::write_json(evaluation::metrics_document(m, config::write(cfg), inference::to_string(spec.mode)), dir / "metrics.json");
  if (written) *written = dir / "metrics.json";
  return m;
}

inline fs::path cmd_sweep(const ExperimentConfig& cfg, const std::string& kind, const std::optional<fs::path>& ckpt) {
  const auto splits = load_splits(cfg);
  evaluation::SweepResult r;
  fs::path dir;
  if (kind == "noise") {
    dir = section(cfg, "sweep_noise");
    const auto path = ckpt.value_or(default_checkpoint(cfg));
    auto model = load_checked(cfg, path);
    r = evaluation::noise_sweep(*model, cfg.schedule.build(), splits.val, cfg.noise.dists, cfg.noise.taus,
                                evaluation::resolve_inference(cfg.run()), cfg.seed, cfg.noise.perturb_features);
    r.model_id = path.string();
  } else if (kind == "sparsity") {
    dir = section(cfg, "sweep_sparsity");
    r = evaluation::sparsity_sweep(cfg.run(), splits.train, splits.val, cfg.sparsity.fractions, cfg.sparsity.seeds);
    r.model_id = config::to_string(cfg.network.framework);
  } else {
    throw ConfigError("--kind", "unknown sweep kind '" + kind + "' (expected noise or sparsity)");
  }
  snapshot(cfg, dir);
  evaluation::write_json(evaluation::to_json(r, config::write(cfg)), dir / "results.json");
  return dir / "results.json";
}

/// CNF, NCF (Gaussian diffusion over labels) and the no-diffusion baseline
/// derived from one experiment config.
inline std::vector<evaluation::Variant> framework_variants(const ExperimentConfig& cfg) {
  std::vector<evaluation::Variant> out;
  auto cnf = cfg.run();
  cnf.net.framework = nets::Framework::cnf;
  if (cnf.net.nn_input == nets::NnInput::labels) cnf.net.nn_input = nets::NnInput::features;
  cnf.inference = {inference::Mode::ssi, 1, cfg.seed, false, false};
  auto ncf = cnf;
  ncf.net.framework = nets::Framework::ncf;
  ncf.net.nn_input = nets::NnInput::labels;
  ncf.inference = {inference::Mode::ncf, cfg.compare.ncf_steps, cfg.seed, false, false};
  auto plain = cnf;
  plain.net.framework = nets::Framework::plain;
  plain.net.fit_target = nets::FitTarget::epsilon;
  out.push_back({"cnf", cnf});
  out.push_back({"ncf", ncf});
  out.push_back({"plain", plain});
  return out;
}

inline fs::path cmd_compare(const ExperimentConfig& cfg) {
  const auto dir = section(cfg, "compare");
  snapshot(cfg, dir);
  const auto splits = load_splits(cfg);
  const auto rep = evaluation::framework_compare(framework_variants(cfg), splits.train, splits.val,
                                                 static_cast<std::size_t>(cfg.compare.budget),
                                                 static_cast<std::size_t>(cfg.compare.eval_every), cfg.compare.threshold,
                                                 cfg.compare.seeds, cfg.compare.cost_steps);
  evaluation::write_json(evaluation::to_json(rep, config::write(cfg)), dir / "results.json");
  return dir / "results.json";
}

/// Renders every results document found under `results` (recursively).
inline std::vector<fs::path> cmd_plot(const fs::path& results, const fs::path& out) {
  if (!fs::exists(results)) throw Error("plot: " + results.string() + " does not exist");
  std::vector<fs::path> files;
  std::vector<fs::path> docs;
  for (const auto& e : fs::recursive_directory_iterator(results))
    if (e.is_regular_file() && e.path().filename() == "results.json") docs.push_back(e.path());
  std::sort(docs.begin(), docs.end());
  for (const auto& d : docs) {
    const auto j = evaluation::read_json(d);
    const auto sub = out / d.parent_path().filename();
    auto f = evaluation::emit_plots(j, sub);
    files.insert(files.end(), f.begin(), f.end());
  }
  return files;
}

/// Runs one subcommand and maps failures onto exit codes.
inline int run(const std::string& cmd, const Options& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto cfg = resolve(o);
    if (cmd == "synth") {
      out << cmd_synth(cfg).string() << '\n';
    } else if (cmd == "train") {
      out << cmd_train(cfg, o.resume).string() << '\n';
    } else if (cmd == "eval") {
      fs::path written;
      const auto m = cmd_eval(cfg, o.checkpoint, o.predictions, &written);
      char buf[128];
      std::snprintf(buf, sizeof buf, "mIoU %.6f mAcc %.6f allAcc %.6f", m.miou, m.macc, m.allacc);
      out << buf << '\n' << written.string() << '\n';
    } else if (cmd == "sweep") {
      out << cmd_sweep(cfg, o.kind, o.checkpoint).string() << '\n';
    } else if (cmd == "compare") {
      out << cmd_compare(cfg).string() << '\n';
    } else if (cmd == "plot") {
      const fs::path in = o.results.value_or(cfg.output_dir);
      const auto files = cmd_plot(in, fs::path(cfg.output_dir) / "plots");
      if (files.empty()) {
        err << "plot: no results with plottable content under " << in.string() << '\n';
        return kExitRuntime;
      }
      for (const auto& f : files) out << f.string() << '\n';
    } else {
      err << "unknown subcommand '" << cmd << "'\n";
      return kExitConfig;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace cdseg::cli
