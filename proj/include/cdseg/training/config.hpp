#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "cdseg/diffusion/schedule.hpp"
#include "cdseg/training/balance.hpp"

namespace cdseg::training {

struct ScheduleConfig {
  diffusion::ScheduleKind kind = diffusion::ScheduleKind::linear;
  int T = 1000;
  std::pair<double, double> range{1e-4, 2e-2};

  diffusion::Schedule build() const { return diffusion::make_schedule(kind, T, range); }
};

struct LossConfig {
  double lambda = 1.0;  // Lovasz weight
  LossStrategy strategy = LossStrategy::gls;
};

struct TrainConfig {
  double lr = 2e-3;
  double block_lr = 2e-4;
  double weight_decay = 5e-3;
  int batch_size = 8;
  int epochs = 800;
  int max_steps = 0;    // 0: epochs decide
  int val_every = 0;    // steps between validations, 0: only at the end
  double voxel_size = 0.02;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
};

inline void validate(const LossConfig& c) {
  if (!(c.lambda >= 0)) throw ConfigError("loss.lambda", "must be >= 0");
}

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) throw ConfigError("train.lr", "must be > 0");
  if (!(c.block_lr > 0)) throw ConfigError("train.block_lr", "must be > 0");
  if (!(c.weight_decay >= 0)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (c.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (c.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (c.max_steps < 0) throw ConfigError("train.max_steps", "must be >= 0");
  if (c.val_every < 0) throw ConfigError("train.val_every", "must be >= 0");
  if (!(c.voxel_size > 0)) throw ConfigError("train.voxel_size", "must be > 0");
  if (c.grad_clip && !(*c.grad_clip > 0)) throw ConfigError("train.grad_clip", "must be > 0 when set");
}

/// Independent generator streams derived from one seed, so any consumer can
/// be replayed on its own.
enum class Stream : std::uint64_t { init = 1, data_order, timestep, noise, rlw, drop_path, inference, perturb, subsample, synth };

inline std::mt19937_64 derive_rng(std::uint64_t seed, Stream s, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace cdseg::training
