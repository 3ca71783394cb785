#pragma once

#include <chrono>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cdseg/evaluation/metrics.hpp"
#include "cdseg/geometry/dataset.hpp"
#include "cdseg/inference/inference.hpp"
#include "cdseg/training/trainer.hpp"

namespace cdseg::evaluation {

using Model = nets::CnfModel<float>;
using training::PreparedScene;

/// Everything needed to train and evaluate one model.
struct RunConfig {
  nets::NetworkConfig net;
  training::ScheduleConfig schedule;
  training::TrainConfig train;
  training::LossConfig loss;
  inference::InferenceSpec inference;
};

/// Inference spec matching the model's framework: NCF models always sample.
inline inference::InferenceSpec resolve_inference(const RunConfig& rc) {
  auto s = rc.inference;
  if (rc.net.framework == nets::Framework::ncf) {
    s.mode = inference::Mode::ncf;
  } else if (s.mode == inference::Mode::ncf) {
    throw ConfigError("inference.mode", "NCF sampling requires network.framework = ncf");
  }
  if (s.mode == inference::Mode::ssi) s.steps = 1;
  return s;
}

inline std::vector<PreparedScene> prepare_all(const geometry::Dataset& scenes, double voxel_size) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(training::prepare_scene(s.cloud, voxel_size));
  return out;
}

/// Point-level metrics over scenes (predictions de-voxelized).
inline MetricsReport evaluate(Model& model, const diffusion::Schedule& sched, const std::vector<PreparedScene>& scenes,
                              const inference::InferenceSpec& spec) {
  ConfusionMatrix cm(model.config().num_classes);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto s = spec;
    s.seed = spec.seed + i;
    auto p = inference::infer(model, scenes[i], sched, s);
    cm.accumulate(scenes[i].point_labels, p.point_labels);
  }
  return metrics(cm);
}

struct TrainedModel {
  std::unique_ptr<training::Trainer<float>> trainer;
  training::LoopResult loop;

  Model& model() { return trainer->model(); }
};

inline TrainedModel train_model(const RunConfig& rc, const std::vector<PreparedScene>& train,
                                const std::vector<PreparedScene>& val, const training::LoopOptions& opt = {}) {
  TrainedModel tm;
  tm.trainer = std::make_unique<training::Trainer<float>>(rc.net, rc.schedule, rc.train, rc.loss);
  const auto spec = resolve_inference(rc);
  std::function<double(Model&)> validate;
  if (!val.empty()) {
    const auto* sched = &tm.trainer->schedule();
    validate = [&val, spec, sched](Model& m) { return evaluate(m, *sched, val, spec).miou; };
  }
  tm.loop = training::train_loop<float>(*tm.trainer, train, validate, opt);
  return tm;
}

struct SweepCell {
  std::string dist;  // noise family, empty for sparsity cells
  double value = 0;  // tau or training fraction
  std::uint64_t seed = 0;
  MetricsReport report;
};

struct SweepResult {
  std::string kind;  // "noise" | "sparsity"
  std::string axis;  // "tau" | "fraction"
  std::vector<SweepCell> cells;
  std::string model_id;
};

/// For every (dist, tau) perturbs a fresh copy of each scene and evaluates.
/// The clean anchor tau = 0 is always included (once, as dist "clean").
inline SweepResult noise_sweep(Model& model, const diffusion::Schedule& sched, const std::vector<PreparedScene>& scenes,
                               const std::vector<diffusion::NoiseFamily>& dists, const std::vector<double>& taus,
                               const inference::InferenceSpec& spec, std::uint64_t seed, bool perturb_features = false) {
  SweepResult r;
  r.kind = "noise";
  r.axis = "tau";
  r.cells.push_back({"clean", 0.0, seed, evaluate(model, sched, scenes, spec)});
  for (std::size_t d = 0; d < dists.size(); ++d)
    for (std::size_t k = 0; k < taus.size(); ++k) {
      if (taus[k] == 0.0) continue;
      std::vector<PreparedScene> noisy;
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto rng = training::derive_rng(seed, training::Stream::perturb,
                                        (static_cast<std::uint64_t>(dists[d]) << 48) ^ (k << 24) ^ i);
        noisy.push_back(training::perturb_scene(scenes[i], {dists[d], taus[k]}, rng, perturb_features));
      }
      r.cells.push_back({diffusion::to_string(dists[d]), taus[k], seed, evaluate(model, sched, noisy, spec)});
    }
  return r;
}

/// Subsampled training split of `fraction` (seeded), keyed for pairing.
inline std::vector<PreparedScene> sparse_split(const std::vector<PreparedScene>& train, double fraction, std::uint64_t seed) {
  auto rng = training::derive_rng(seed, training::Stream::subsample, static_cast<std::uint64_t>(fraction * 1e6));
  return geometry::subsample_dataset(train, fraction, rng);
}

/// Trains a fresh model per (fraction, seed) on the subsampled training
/// split and evaluates it on the full validation split.
inline SweepResult sparsity_sweep(const RunConfig& rc, const std::vector<PreparedScene>& train,
                                  const std::vector<PreparedScene>& val, const std::vector<double>& fractions,
                                  const std::vector<std::uint64_t>& seeds) {
  SweepResult r;
  r.kind = "sparsity";
  r.axis = "fraction";
  const auto spec = resolve_inference(rc);
  for (double f : fractions)
    for (auto seed : seeds) {
      RunConfig c = rc;
      c.train.seed = seed;
      auto sub = sparse_split(train, f, seed);
      auto tm = train_model(c, sub, {});
      auto s = spec;
      s.seed = seed;
      r.cells.push_back({"", f, seed, evaluate(tm.model(), tm.trainer->schedule(), val, s)});
    }
  return r;
}

struct CurvePoint {
  std::size_t step = 0;
  double miou = 0;
};

struct InferenceCost {
  int steps = 0;
  std::size_t nn_encoder = 0, nn_decoder = 0, cn = 0;
  double seconds = 0;
};

struct VariantRun {
  std::string name;
  nets::Framework framework = nets::Framework::cnf;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> curve;
  std::vector<double> loss;  // total loss per step
  std::size_t steps_to_threshold = std::numeric_limits<std::size_t>::max();
  std::vector<InferenceCost> cost;
};

struct CompareReport {
  double threshold = 0;
  std::size_t budget = 0;
  std::vector<VariantRun> runs;
};

struct Variant {
  std::string name;
  RunConfig config;
};

/// Per-step inference cost on one scene for each requested step count.
inline std::vector<InferenceCost> inference_cost(Model& model, const diffusion::Schedule& sched, const PreparedScene& scene,
                                                 const inference::InferenceSpec& base, const std::vector<int>& step_counts) {
  std::vector<InferenceCost> out;
  for (int n : step_counts) {
    auto s = base;
    if (s.mode == inference::Mode::ncf) s.steps = n;
    const auto t0 = std::chrono::steady_clock::now();
    auto p = inference::infer(model, scene, sched, s);
    const auto t1 = std::chrono::steady_clock::now();
    out.push_back({n, p.counters.nn_encoder, p.counters.nn_decoder, p.counters.cn,
                   std::chrono::duration<double>(t1 - t0).count()});
  }
  return out;
}

/// Trains every variant under the same step budget and seeds, recording
/// validation mIoU every `eval_every` steps, the first step reaching
/// `threshold`, and inference cost as a function of sampling steps.
inline CompareReport framework_compare(const std::vector<Variant>& variants, const std::vector<PreparedScene>& train,
                                       const std::vector<PreparedScene>& val, std::size_t budget, std::size_t eval_every,
                                       double threshold, const std::vector<std::uint64_t>& seeds,
                                       const std::vector<int>& cost_steps = {1, 5, 10, 20}) {
  if (val.empty()) throw ArgumentError("framework_compare: empty validation split");
  CompareReport rep;
  rep.threshold = threshold;
  rep.budget = budget;
  for (auto seed : seeds)
    for (const auto& v : variants) {
      RunConfig c = v.config;
      c.train.seed = seed;
      c.train.max_steps = static_cast<int>(budget);
      c.train.val_every = static_cast<int>(eval_every);
      c.train.epochs = std::max(c.train.epochs, static_cast<int>(budget));
      auto tm = train_model(c, train, val);
      VariantRun run;
      run.name = v.name;
      run.framework = c.net.framework;
      run.seed = seed;
      for (const auto& vr : tm.loop.validations) {
        run.curve.push_back({vr.step, vr.miou});
        if (vr.miou >= threshold && run.steps_to_threshold == std::numeric_limits<std::size_t>::max())
          run.steps_to_threshold = vr.step;
      }
      for (const auto& s : tm.loop.steps) run.loss.push_back(s.total);
      run.cost = inference_cost(tm.model(), tm.trainer->schedule(), val.front(), resolve_inference(c), cost_steps);
      rep.runs.push_back(std::move(run));
    }
  return rep;
}

}  // namespace cdseg::evaluation
