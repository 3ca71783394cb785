#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "cdseg/diffusion/process.hpp"
#include "cdseg/training/batch.hpp"
#include "cdseg/training/checkpoint.hpp"
#include "cdseg/training/config.hpp"
#include "cdseg/training/losses.hpp"

namespace cdseg::training {

struct StepReport {
  std::size_t step = 0;
  double l_nn = 0, l_cn = 0;
  std::vector<double> weights;
  double total = 0;
  double lr = 0;
  double grad_norm = 0;
};

inline config::json to_json(const StepReport& r) {
  return {{"step", r.step}, {"L_nn", r.l_nn}, {"L_cn", r.l_cn}, {"weights", r.weights},
          {"total", r.total}, {"lr", r.lr},    {"grad_norm", r.grad_norm}};
}

/// Noised NN input for one batch: clean target x0, drawn noise eps, per
/// element timesteps, and the network input (x_t, or x0 without diffusion).
template <class T>
struct NoisyInput {
  Matrix<T> x0, eps, input;
  std::vector<int> t;
};

template <class T>
NoisyInput<T> draw_noisy_input(const Batch<T>& b, const nets::NetworkConfig& net, const diffusion::Schedule& sched,
                               std::mt19937_64& rng_t, std::mt19937_64& rng_eps) {
  NoisyInput<T> n;
  n.x0 = nn_target(b, net);
  if (!net.uses_time()) {
    n.input = n.x0;
    n.eps = Matrix<T>(n.x0.rows(), n.x0.cols());
    n.t.assign(b.batch_size(), 0);
    return n;
  }
  std::uniform_int_distribution<int> ut(1, sched.steps());
  n.t.resize(b.batch_size());
  for (auto& t : n.t) t = ut(rng_t);
  std::normal_distribution<double> nd;
  n.eps = Matrix<T>(n.x0.rows(), n.x0.cols());
  for (auto& v : n.eps.flat()) v = static_cast<T>(nd(rng_eps));
  n.input = Matrix<T>(n.x0.rows(), n.x0.cols());
  const auto& batch = b.inputs.nn_hierarchy->levels[0].batch;
  for (std::size_t i = 0; i < n.x0.rows(); ++i) {
    const double ab = sched.alpha_bar(n.t[batch[i]]);
    const T a = static_cast<T>(std::sqrt(ab)), s = static_cast<T>(std::sqrt(1.0 - ab));
    for (std::size_t c = 0; c < n.x0.cols(); ++c) n.input(i, c) = a * n.x0(i, c) + s * n.eps(i, c);
  }
  return n;
}

/// Loss graph of one training step.
template <class T>
struct StepGraph {
  autograd::Var l_nn, l_cn, total;
  Combined combined;
  autograd::Var logits;
};

template <class T>
StepGraph<T> build_losses(autograd::Graph<T>& g, nets::CnfModel<T>& model, const Batch<T>& b, const NoisyInput<T>& in,
                          const LossConfig& loss, BalanceState<T>& bal, std::mt19937_64& rng_rlw,
                          const nets::DropPath& dp, bool detach_nn = false, autograd::AttentionProbe* probe = nullptr) {
  const auto& net = model.config();
  StepGraph<T> s;
  auto nn = model.nn_forward(g, g.constant(in.input), b.inputs, in.t, dp, true, nullptr, probe);
  const Matrix<T>& target = net.framework == nets::Framework::plain || net.fit_target == nets::FitTarget::x0 ? in.x0 : in.eps;
  s.l_nn = mse_loss(g, nn.prediction, target);
  if (net.framework == nets::Framework::ncf) {
    s.total = s.l_nn;
    s.combined.total = s.l_nn;
    s.combined.weights = {1.0};
    return s;
  }
  auto bottleneck = nn.bottleneck;
  if (detach_nn) bottleneck.values = autograd::detach(g, bottleneck.values);
  s.logits = model.cn_forward(g, b.inputs, bottleneck, dp, nullptr, probe);
  s.l_cn = segmentation_loss(g, s.logits, b.labels, static_cast<T>(loss.lambda));
  s.combined = combine_losses(g, loss.strategy, {s.l_nn, s.l_cn}, bal, rng_rlw);
  s.total = s.combined.total;
  return s;
}

/// Model, optimizer and loss-balancing state advanced one step at a time.
template <class T>
class Trainer {
 public:
  Trainer(const nets::NetworkConfig& net, const ScheduleConfig& sched, const TrainConfig& train, const LossConfig& loss)
      : model_(net, train.seed), sched_cfg_(sched), sched_(sched.build()), train_(train), loss_(loss),
        opt_(AdamWConfig{train.lr, train.block_lr, train.weight_decay, 0.9, 0.999, 1e-8, train.grad_clip}) {
    validate(train_);
    validate(loss_);
    for (auto& p : model_.parameters().all()) params_.push_back(&p);
    for (auto& p : bal_.log_var) params_.push_back(&p);
  }

  nets::CnfModel<T>& model() noexcept { return model_; }
  const diffusion::Schedule& schedule() const noexcept { return sched_; }
  const ScheduleConfig& schedule_config() const noexcept { return sched_cfg_; }
  const TrainConfig& train_config() const noexcept { return train_; }
  const LossConfig& loss_config() const noexcept { return loss_; }
  AdamW<T>& optimizer() noexcept { return opt_; }
  BalanceState<T>& balance() noexcept { return bal_; }
  std::size_t step() const noexcept { return step_; }
  void set_step(std::size_t s) noexcept { step_ = s; }

  /// One optimizer update at global step `step()`, with cosine decay over
  /// `total_steps`. Randomness comes from streams keyed by the step index.
  StepReport train_step(const Batch<T>& b, std::size_t total_steps) {
    const std::uint64_t seed = train_.seed;
    auto rng_t = derive_rng(seed, Stream::timestep, step_);
    auto rng_eps = derive_rng(seed, Stream::noise, step_);
    auto rng_rlw = derive_rng(seed, Stream::rlw, step_);
    auto rng_dp = derive_rng(seed, Stream::drop_path, step_);
    const auto in = draw_noisy_input(b, model_.config(), sched_, rng_t, rng_eps);
    nets::DropPath dp{model_.config().drop_path, &rng_dp};

    model_.parameters().zero_grad();
    for (auto& p : bal_.log_var) p.grad.fill(T(0));
    autograd::Graph<T> g(true);
    auto s = build_losses(g, model_, b, in, loss_, bal_, rng_rlw, dp);

    StepReport r;
    r.step = step_;
    r.l_nn = static_cast<double>(g.value(s.l_nn)[0]);
    r.l_cn = s.l_cn.valid() ? static_cast<double>(g.value(s.l_cn)[0]) : 0.0;
    r.total = static_cast<double>(g.value(s.total)[0]);
    r.weights = s.combined.weights;
    if (!std::isfinite(r.total) || !std::isfinite(r.l_nn) || !std::isfinite(r.l_cn))
      throw NumericError("non-finite loss at step " + std::to_string(step_) + ": L_nn=" + std::to_string(r.l_nn) +
                         " L_cn=" + std::to_string(r.l_cn) + " total=" + std::to_string(r.total));
    g.backward(s.total);
    const double factor = cosine_lr(1.0, step_, total_steps);
    r.lr = train_.lr * factor;
    r.grad_norm = opt_.step(params_, factor);
    ++step_;
    return r;
  }

  void save(const std::filesystem::path& path, config::json state = config::json::object()) const {
    state["step"] = step_;
    save_checkpoint(path, model_, sched_cfg_, &opt_, &bal_, state);
  }

  /// Restores parameters, optimizer moments and the step counter.
  config::json restore(const std::filesystem::path& path) {
    const auto f = read_checkpoint(path);
    load_checkpoint(f, model_, &opt_, &bal_);
    step_ = f.state().value("step", std::size_t{0});
    return f.state();
  }

 private:
  nets::CnfModel<T> model_;
  ScheduleConfig sched_cfg_;
  diffusion::Schedule sched_;
  TrainConfig train_;
  LossConfig loss_;
  AdamW<T> opt_;
  BalanceState<T> bal_;
  std::vector<autograd::Parameter<T>*> params_;
  std::size_t step_ = 0;
};

struct ValidationRecord {
  std::size_t step = 0;
  double miou = 0;
};

struct LoopOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints and step log
  bool resume = false;                           // continue from out_dir/last.ckpt when present
  std::optional<std::size_t> stop_after;         // stop (as if interrupted) after this global step
  bool log_steps = false;
};

struct LoopResult {
  std::vector<StepReport> steps;
  std::vector<ValidationRecord> validations;
  double best_miou = -1;
  std::size_t best_step = 0;
  std::size_t total_steps = 0;
  std::vector<std::filesystem::path> checkpoints;
};

inline std::size_t steps_per_epoch(std::size_t scenes, int batch_size) {
  return (scenes + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

inline std::size_t total_steps(const TrainConfig& c, std::size_t scenes) {
  const std::size_t by_epochs = steps_per_epoch(scenes, c.batch_size) * static_cast<std::size_t>(c.epochs);
  return c.max_steps > 0 ? std::min<std::size_t>(by_epochs, static_cast<std::size_t>(c.max_steps)) : by_epochs;
}

/// Scenes of epoch `e` in seeded shuffled order.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = derive_rng(seed, Stream::data_order, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Epoch loop with seeded shuffling, periodic validation through
/// `validate` (returns mIoU), best/last checkpoint retention and a
/// line-delimited step log. Resuming from last.ckpt replays the identical
/// trajectory because every random stream is keyed by the step index.
template <class T>
LoopResult train_loop(Trainer<T>& trainer, const std::vector<PreparedScene>& train,
                      const std::function<double(nets::CnfModel<T>&)>& validate, const LoopOptions& opt = {}) {
  if (train.empty()) throw ArgumentError("train_loop: empty training split");
  const auto& tc = trainer.train_config();
  LoopResult res;
  res.total_steps = total_steps(tc, train.size());
  const std::size_t spe = steps_per_epoch(train.size(), tc.batch_size);

  std::ofstream log;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    const auto last = *opt.out_dir / "last.ckpt";
    if (opt.resume && std::filesystem::exists(last)) {
      const auto st = trainer.restore(last);
      res.best_miou = st.value("best_miou", -1.0);
      res.best_step = st.value("best_step", std::size_t{0});
      spdlog::info("resumed from {} at step {}", last.string(), trainer.step());
    }
    log.open(*opt.out_dir / "train_log.jsonl", trainer.step() > 0 ? std::ios::app : std::ios::trunc);
  }

  auto state = [&] { return config::json{{"best_miou", res.best_miou}, {"best_step", res.best_step}}; };
  auto run_validation = [&](std::size_t step) {
    if (!validate) return;
    const double m = validate(trainer.model());
    res.validations.push_back({step, m});
    spdlog::debug("step {} val mIoU {:.4f}", step, m);
    if (m > res.best_miou) {
      res.best_miou = m;
      res.best_step = step;
      if (opt.out_dir) {
        trainer.save(*opt.out_dir / "best.ckpt", state());
        res.checkpoints.push_back(*opt.out_dir / "best.ckpt");
      }
    }
  };

  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  while (trainer.step() < res.total_steps) {
    const std::size_t step = trainer.step();
    const std::size_t epoch = step / spe, within = step % spe;
    if (epoch != order_epoch) {
      order = epoch_order(tc.seed, epoch, train.size());
      order_epoch = epoch;
    }
    std::vector<const PreparedScene*> parts;
    const std::size_t lo = within * static_cast<std::size_t>(tc.batch_size);
    for (std::size_t k = lo; k < std::min(order.size(), lo + static_cast<std::size_t>(tc.batch_size)); ++k)
      parts.push_back(&train[order[k]]);
    const auto batch = make_batch<T>(parts, trainer.model().config());
    auto r = trainer.train_step(batch, res.total_steps);
    if (log.is_open()) log << to_json(r).dump() << '\n';
    if (opt.log_steps) spdlog::info("step {} total {:.5f} L_nn {:.5f} L_cn {:.5f}", r.step, r.total, r.l_nn, r.l_cn);
    res.steps.push_back(std::move(r));
    const std::size_t done = trainer.step();
    if (tc.val_every > 0 && done % static_cast<std::size_t>(tc.val_every) == 0 && done < res.total_steps) {
      run_validation(done);
      if (opt.out_dir) trainer.save(*opt.out_dir / "last.ckpt", state());
    }
    if (opt.stop_after && done >= *opt.stop_after && done < res.total_steps) {
      if (opt.out_dir) {
        trainer.save(*opt.out_dir / "last.ckpt", state());
        res.checkpoints.push_back(*opt.out_dir / "last.ckpt");
      }
      return res;
    }
  }
  run_validation(trainer.step());
  if (opt.out_dir) {
    trainer.save(*opt.out_dir / "last.ckpt", state());
    res.checkpoints.push_back(*opt.out_dir / "last.ckpt");
  }
  return res;
}

}  // namespace cdseg::training
