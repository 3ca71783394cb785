#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cdseg/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace cdseg;
  CLI::App app{"Conditional-noise diffusion point-cloud segmentation toolkit"};
  app.require_subcommand(1);
  cli::Options o;
  std::string level = "warn";
  std::string cfg_path, ckpt, out, results;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", cfg_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "base preset: tiny or paper")->capture_default_str();
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--set", o.sets, "override a config field: dotted.key=value")->take_all();
    sub->add_option("--out", out, "output root (overrides " + std::string(config::kOutputRootEnv) + " and output_dir)");
    sub->add_option("--log-level", level, "trace, debug, info, warn, error")->capture_default_str();
  };
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  auto* sweep = app.add_subcommand("sweep", "noise-robustness or training-sparsity sweep");
  auto* compare = app.add_subcommand("compare", "train CNF, NCF and baseline under one budget");
  auto* plot = app.add_subcommand("plot", "render tables and plots from results");
  for (auto* s : {synth, train, eval, sweep, compare, plot}) common(s);
  train->add_flag("--resume", o.resume, "continue from the last checkpoint in the output root");
  eval->add_option("--checkpoint", ckpt, "checkpoint (default: train/best.ckpt)");
  eval->add_flag("--predictions", o.predictions, "write per-scene prediction clouds");
  sweep->add_option("--kind", o.kind, "noise or sparsity")->capture_default_str();
  sweep->add_option("--checkpoint", ckpt, "checkpoint for noise sweeps");
  plot->add_option("--results", results, "directory searched for results.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(level));
  if (!cfg_path.empty()) o.config = cfg_path;
  if (!ckpt.empty()) o.checkpoint = ckpt;
  if (!out.empty()) o.out = out;
  if (!results.empty()) o.results = results;
  return cli::run(app.get_subcommands().front()->get_name(), o);
}
