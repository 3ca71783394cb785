#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cdseg/config/schema.hpp"
#include "cdseg/evaluation/harness.hpp"
#include "cdseg/geometry/synth.hpp"

namespace cdseg::config {

inline constexpr const char* kOutputRootEnv = "CDSEG_OUTPUT_ROOT";

struct DataConfig {
  std::string path;  // dataset directory with a manifest; empty: synthesize
  geometry::SceneSpec scene;
  int train_scenes = 8;
  int val_scenes = 4;
};

struct NoiseSweepConfig {
  std::vector<diffusion::NoiseFamily> dists{diffusion::NoiseFamily::gaussian, diffusion::NoiseFamily::uniform,
                                            diffusion::NoiseFamily::laplace, diffusion::NoiseFamily::poisson};
  std::vector<double> taus{0.01, 0.05, 0.1, 0.5, 0.7, 1.0};
  bool perturb_features = false;
};

struct SparsitySweepConfig {
  std::vector<double> fractions{0.05, 0.1, 0.125, 0.25, 0.5};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct CompareConfig {
  int budget = 300;
  int eval_every = 25;
  double threshold = 0.85;
  int ncf_steps = 20;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<int> cost_steps{1, 5, 10, 20, 50};
};

struct ExperimentConfig {
  nets::NetworkConfig network;
  training::ScheduleConfig schedule;
  training::TrainConfig train;
  training::LossConfig loss;
  DataConfig data;
  inference::InferenceSpec inference;
  NoiseSweepConfig noise;
  SparsitySweepConfig sparsity;
  CompareConfig compare;
  std::string output_dir = "runs";
  std::uint64_t seed = 0;

  evaluation::RunConfig run() const {
    evaluation::RunConfig rc{network, schedule, train, loss, inference};
    rc.train.seed = seed;
    rc.inference.seed = seed;
    return rc;
  }
};

// Presets.

/// Published full-scale hyperparameters (indoor benchmark column).
inline ExperimentConfig paper_preset() {
  ExperimentConfig c;
  auto& n = c.network;
  n.nn = {{4, 4}, {2, 2}, {64, 128}, {4, 8}, {2, 2}, {64, 64}, {4, 4}};
  n.cn = {{2, 2, 2, 2}, {2, 2, 6, 6}, {64, 128, 256, 512}, {4, 8, 16, 32}, {2, 2, 2, 2}, {64, 64, 128, 256}, {4, 4, 8, 16}};
  n.ffm_depth = 1;
  n.ffm_channels = 512;
  n.ffm_heads = 32;
  n.ffm_feat_scale = 1.0;
  n.patch_size = 1024;
  n.mlp_ratio = 4;
  n.drop_path = 0.3;
  n.time_embed_dim = 128;
  n.grid_size = 0.02;
  c.schedule = {diffusion::ScheduleKind::cosine, 1000, {1e-4, 2e-2}};
  c.train.lr = 2e-3;
  c.train.block_lr = 2e-4;
  c.train.weight_decay = 5e-3;
  c.train.batch_size = 8;
  c.train.epochs = 800;
  c.train.voxel_size = 0.02;
  c.train.val_every = 0;
  c.loss = {1.0, training::LossStrategy::gls};
  return c;
}

/// Desk-scale configuration: trains on synthetic rooms in well under a minute.
inline ExperimentConfig tiny_preset() {
  ExperimentConfig c;
  auto& n = c.network;
  n.nn = {{4, 4}, {1, 1}, {8, 16}, {1, 2}, {1, 1}, {8, 8}, {1, 1}};
  n.cn = {{2, 2, 2, 2}, {1, 1, 1, 1}, {8, 16, 32, 64}, {1, 2, 4, 8}, {1, 1, 1, 1}, {8, 8, 16, 32}, {1, 1, 2, 4}};
  n.ffm_depth = 1;
  n.ffm_channels = 32;
  n.ffm_heads = 4;
  n.patch_size = 128;
  n.mlp_ratio = 2;
  n.drop_path = 0.0;
  n.time_embed_dim = 32;
  n.grid_size = 0.05;
  c.schedule = {diffusion::ScheduleKind::linear, 1000, {1e-4, 2e-2}};
  c.train.lr = 3e-3;
  c.train.block_lr = 3e-3;
  c.train.weight_decay = 1e-4;
  c.train.batch_size = 2;
  c.train.epochs = 1000;
  c.train.max_steps = 200;
  c.train.val_every = 0;
  c.train.voxel_size = 0.05;
  c.loss = {1.0, training::LossStrategy::gls};
  c.compare.budget = 200;
  c.compare.eval_every = 20;
  return c;
}

inline ExperimentConfig preset(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "tiny") return tiny_preset();
  throw ConfigError("preset", "unknown preset '" + name + "' (expected paper or tiny)");
}

// JSON.

inline void read(Fields& f, geometry::SceneSpec& s) {
  f.get("num_points", s.num_points);
  f.get("num_classes", s.num_classes);
  f.get("room", s.room);
  f.get("room_jitter", s.room_jitter);
  f.get("blob_count", s.blob_count);
  f.get("blob_size", s.blob_size);
  f.get("feature_noise", s.feature_noise);
  f.get("position_noise", s.position_noise);
}

inline json write(const geometry::SceneSpec& s) {
  return {{"num_points", s.num_points},     {"num_classes", s.num_classes},     {"room", s.room},
          {"room_jitter", s.room_jitter},   {"blob_count", s.blob_count},       {"blob_size", s.blob_size},
          {"feature_noise", s.feature_noise}, {"position_noise", s.position_noise}};
}

inline inference::Mode parse_mode(const std::string& m, const std::string& path) {
  return detail::parse_enum<inference::Mode>(m, path,
                                             {{"SSI", inference::Mode::ssi},
                                              {"MSAI", inference::Mode::msai},
                                              {"MSFI", inference::Mode::msfi},
                                              {"NCF", inference::Mode::ncf}});
}

inline void read(Fields& f, ExperimentConfig& c) {
  f.object("network", [&](Fields& s) { read(s, c.network); });
  f.object("schedule", [&](Fields& s) { read(s, c.schedule); });
  f.object("train", [&](Fields& s) { read(s, c.train); });
  f.object("loss", [&](Fields& s) { read(s, c.loss); });
  f.object("data", [&](Fields& s) {
    s.get("path", c.data.path);
    s.object("scene", [&](Fields& ss) { read(ss, c.data.scene); });
    s.get("train_scenes", c.data.train_scenes);
    s.get("val_scenes", c.data.val_scenes);
  });
  f.object("inference", [&](Fields& s) {
    if (s.has("mode")) {
      std::string m;
      s.get("mode", m);
      c.inference.mode = parse_mode(m, s.path_of("mode"));
    }
    s.get("steps", c.inference.steps);
    s.get("redraw", c.inference.redraw);
    s.get("stochastic", c.inference.stochastic);
  });
  f.object("sweeps", [&](Fields& s) {
    s.object("noise", [&](Fields& n) {
      n.get("dists", c.noise.dists);
      n.get("taus", c.noise.taus);
      n.get("perturb_features", c.noise.perturb_features);
    });
    s.object("sparsity", [&](Fields& n) {
      n.get("fractions", c.sparsity.fractions);
      n.get("seeds", c.sparsity.seeds);
    });
  });
  f.object("compare", [&](Fields& s) {
    s.get("budget", c.compare.budget);
    s.get("eval_every", c.compare.eval_every);
    s.get("threshold", c.compare.threshold);
    s.get("ncf_steps", c.compare.ncf_steps);
    s.get("seeds", c.compare.seeds);
    s.get("cost_steps", c.compare.cost_steps);
  });
  f.get("output_dir", c.output_dir);
  f.get("seed", c.seed);
}

inline json write(const ExperimentConfig& c) {
  json dists = json::array();
  for (auto d : c.noise.dists) dists.push_back(diffusion::to_string(d));
  return {{"network", write(c.network)},
          {"schedule", write(c.schedule)},
          {"train", write(c.train)},
          {"loss", write(c.loss)},
          {"data",
           {{"path", c.data.path},
            {"scene", write(c.data.scene)},
            {"train_scenes", c.data.train_scenes},
            {"val_scenes", c.data.val_scenes}}},
          {"inference",
           {{"mode", inference::to_string(c.inference.mode)},
            {"steps", c.inference.steps},
            {"redraw", c.inference.redraw},
            {"stochastic", c.inference.stochastic}}},
          {"sweeps",
           {{"noise", {{"dists", dists}, {"taus", c.noise.taus}, {"perturb_features", c.noise.perturb_features}}},
            {"sparsity", {{"fractions", c.sparsity.fractions}, {"seeds", c.sparsity.seeds}}}}},
          {"compare",
           {{"budget", c.compare.budget},
            {"eval_every", c.compare.eval_every},
            {"threshold", c.compare.threshold},
            {"ncf_steps", c.compare.ncf_steps},
            {"seeds", c.compare.seeds},
            {"cost_steps", c.compare.cost_steps}}},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

/// Cross-field checks with field-precise messages.
inline void validate(const ExperimentConfig& c) {
  nets::validate(c.network);
  training::validate(c.train);
  training::validate(c.loss);
  (void)c.schedule.build();
  inference::validate(c.inference);
  if (c.network.framework == nets::Framework::ncf && c.inference.mode != inference::Mode::ncf)
    throw ConfigError("inference.mode", "framework ncf is evaluated by NCF sampling; set inference.mode = NCF");
  if (c.network.framework != nets::Framework::ncf && c.inference.mode == inference::Mode::ncf)
    throw ConfigError("inference.mode", "NCF sampling requires network.framework = ncf");
  if (c.inference.mode != inference::Mode::ssi && c.inference.steps > c.schedule.T)
    throw ConfigError("inference.steps", "must be <= schedule.T");
  if (c.network.framework == nets::Framework::plain && c.inference.mode != inference::Mode::ssi)
    throw ConfigError("inference.mode", "framework plain has no diffusion; only SSI applies");
  if (c.data.path.empty()) {
    if (c.data.train_scenes < 1) throw ConfigError("data.train_scenes", "must be >= 1");
    if (c.data.val_scenes < 0) throw ConfigError("data.val_scenes", "must be >= 0");
    if (c.data.scene.num_classes != c.network.num_classes)
      throw ConfigError("data.scene.num_classes", "must equal network.num_classes");
    if (c.network.in_channels != geometry::kSynthChannels)
      throw ConfigError("network.in_channels", "synthetic scenes carry " + std::to_string(geometry::kSynthChannels) + " channels");
  }
  for (std::size_t i = 0; i < c.noise.taus.size(); ++i)
    if (!(c.noise.taus[i] >= 0)) throw ConfigError("sweeps.noise.taus[" + std::to_string(i) + "]", "must be >= 0");
  for (std::size_t i = 0; i < c.sparsity.fractions.size(); ++i)
    if (!(c.sparsity.fractions[i] > 0 && c.sparsity.fractions[i] <= 1))
      throw ConfigError("sweeps.sparsity.fractions[" + std::to_string(i) + "]", "must be in (0, 1]");
  if (c.compare.budget < 1) throw ConfigError("compare.budget", "must be >= 1");
  if (c.compare.eval_every < 1) throw ConfigError("compare.eval_every", "must be >= 1");
  if (c.compare.ncf_steps < 1 || c.compare.ncf_steps > c.schedule.T)
    throw ConfigError("compare.ncf_steps", "must be in [1, schedule.T]");
  for (int s : c.compare.cost_steps)
    if (s < 1 || s > c.schedule.T) throw ConfigError("compare.cost_steps", "entries must be in [1, schedule.T]");
}

/// Applies `dotted.path=value` to a JSON document. The value is parsed as
/// JSON when possible, otherwise taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

/// Preset, then config file contents, then dotted overrides; parsed strictly.
inline ExperimentConfig load_config(const std::string& preset_name, const std::optional<std::filesystem::path>& file,
                                    const std::vector<std::string>& overrides) {
  json doc = write(preset(preset_name));
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("--config", "cannot open " + file->string());
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    if (!user.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    // strict check of the user document alone, so typos surface with their own path
    (void)parse_strict<ExperimentConfig>(user, "", preset(preset_name));
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  auto cfg = parse_strict<ExperimentConfig>(doc, "");
  validate(cfg);
  return cfg;
}

/// Output root: the environment override wins over the config.
inline std::filesystem::path output_root(const ExperimentConfig& c) {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return c.output_dir;
}

}  // namespace cdseg::config

namespace cdseg::config {

/// Synthetic rooms: the first `train_scenes` get split "train", the rest "val".
inline geometry::Dataset synthesize(const DataConfig& d, std::uint64_t seed) {
  geometry::Dataset out;
  const int n = d.train_scenes + d.val_scenes;
  for (int i = 0; i < n; ++i) {
    auto spec = d.scene;
    spec.seed = seed;
    auto rng = training::derive_rng(seed, training::Stream::synth, static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", i);
    out.push_back({name, i < d.train_scenes ? "train" : "val", geometry::synth_scene(spec, rng)});
  }
  return out;
}

/// The configured dataset: loaded from data.path, or synthesized.
inline geometry::Dataset make_dataset(const ExperimentConfig& c) {
  if (!c.data.path.empty()) return geometry::load_dataset(c.data.path);
  return synthesize(c.data, c.seed);
}

}  // namespace cdseg::config
