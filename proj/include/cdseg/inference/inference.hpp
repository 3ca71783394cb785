#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdseg/diffusion/process.hpp"
#include "cdseg/geometry/cloud_io.hpp"
#include "cdseg/training/batch.hpp"
#include "cdseg/training/config.hpp"

namespace cdseg::inference {

using nets::PassCounters;
using training::PreparedScene;

/// SSI: one step. MSAI / MSFI: ladder over the noise branch, averaging or
/// keeping the last CN logits. NCF: iterative sampling of the label field.
enum class Mode { ssi, msai, msfi, ncf };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::ssi: return "SSI";
    case Mode::msai: return "MSAI";
    case Mode::msfi: return "MSFI";
    case Mode::ncf: return "NCF";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "SSI" || s == "ssi") return Mode::ssi;
  if (s == "MSAI" || s == "msai") return Mode::msai;
  if (s == "MSFI" || s == "msfi") return Mode::msfi;
  if (s == "NCF" || s == "ncf") return Mode::ncf;
  throw ConfigError("inference.mode", "unknown mode '" + s + "' (expected SSI, MSAI, MSFI or NCF)");
}

struct InferenceSpec {
  Mode mode = Mode::ssi;
  int steps = 1;
  std::uint64_t seed = 0;
  bool redraw = false;      // multi-step: fresh c_t ~ N(0, I) at every step instead of annealing one trajectory
  bool stochastic = false;  // NCF: ancestral DDPM steps (requires steps = T)
};

inline void validate(const InferenceSpec& s) {
  if (s.steps < 1) throw ConfigError("inference.steps", "must be >= 1");
  if (s.mode == Mode::ssi && s.steps != 1) throw ConfigError("inference.steps", "SSI runs exactly one step");
}

template <class T>
struct Prediction {
  Matrix<T> logits;               // per voxel, K columns (NCF: final x0 estimate)
  std::vector<int> voxel_labels;
  std::vector<int> point_labels;  // de-voxelized to the original points
  PassCounters counters;
};

namespace detail {

template <class T>
std::vector<int> argmax_rows(const Matrix<T>& m) {
  std::vector<int> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

template <class T>
Matrix<T> standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix<T> m(rows, cols);
  std::normal_distribution<double> nd;
  for (auto& v : m.flat()) v = static_cast<T>(nd(rng));
  return m;
}

template <class T>
void finish(Prediction<T>& p, const PreparedScene& scene) {
  p.voxel_labels = argmax_rows(p.logits);
  p.point_labels = geometry::devoxelize(p.voxel_labels, scene.to_voxel);
}

/// Converts an x0 prediction to the implied noise at timestep t.
template <class T>
Matrix<T> eps_from_x0(const Matrix<T>& x_t, const Matrix<T>& x0, int t, const diffusion::Schedule& sched) {
  const double ab = sched.alpha_bar(t);
  Matrix<T> eps(x_t.rows(), x_t.cols());
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  for (std::size_t k = 0; k < eps.size(); ++k) eps[k] = static_cast<T>((x_t[k] - a * x0[k]) / s);
  return eps;
}

template <class T>
Matrix<T> ddim(const Matrix<T>& x_t, const Matrix<T>& eps, int t, int t_prev, const diffusion::Schedule& sched) {
  auto v = diffusion::ddim_step<T>(x_t.flat(), eps.flat(), t, t_prev, sched);
  return Matrix<T>(x_t.rows(), x_t.cols(), std::move(v));
}

}  // namespace detail

template <class T>
void check_compatible(const nets::CnfModel<T>& model, const diffusion::Schedule& sched, Mode mode) {
  const auto fw = model.config().framework;
  if (mode == Mode::ncf && fw != nets::Framework::ncf)
    throw ConsistencyError("NCF inference requires a model trained with framework ncf");
  if (mode != Mode::ncf && fw == nets::Framework::ncf)
    throw ConsistencyError(to_string(mode) + " inference requires a conditional-network model (cnf or plain)");
  if (sched.steps() < 1) throw ConsistencyError("inference: empty schedule");
}

/// CN logits with the noise branch run at per-step input `x` and timestep t.
template <class T>
Matrix<T> fused_logits(nets::CnfModel<T>& model, const training::Batch<T>& b, const Matrix<T>& x, int t, bool decode,
                       PassCounters& counters, Matrix<T>* nn_prediction = nullptr) {
  autograd::Graph<T> g(false);
  nets::DropPath off;
  std::vector<int> ts(b.batch_size(), t);
  auto nn = model.nn_forward(g, g.constant(x), b.inputs, ts, off, decode, &counters);
  if (nn_prediction && decode) *nn_prediction = g.value(nn.prediction);
  return g.value(model.cn_forward(g, b.inputs, nn.bottleneck, off, &counters));
}

/// Single-step inference: c_T ~ N(0, I) through the NN encoder at t = T,
/// fused into the CN. A plain (no-diffusion) model gets its clean input.
template <class T>
Prediction<T> infer_single_step(nets::CnfModel<T>& model, const PreparedScene& scene, const diffusion::Schedule& sched,
                                std::uint64_t seed) {
  check_compatible(model, sched, Mode::ssi);
  const auto b = training::make_batch<T>({&scene}, model.config());
  Prediction<T> p;
  Matrix<T> x;
  if (model.config().uses_time()) {
    auto rng = training::derive_rng(seed, training::Stream::inference, 0);
    x = detail::standard_normal<T>(b.size(), static_cast<std::size_t>(model.config().nn_target_channels()), rng);
  } else {
    x = training::nn_target(b, model.config());
  }
  p.logits = fused_logits(model, b, x, sched.steps(), false, p.counters);
  detail::finish(p, scene);
  return p;
}

/// Multi-step CNF inference over a descending DDIM ladder. The noise branch
/// input is annealed along the DDIM trajectory (or redrawn when `redraw`),
/// and CN logits are averaged (MSAI) or the last kept (MSFI). With one step
/// this is SSI exactly.
template <class T>
Prediction<T> infer_multi_step(nets::CnfModel<T>& model, const PreparedScene& scene, const diffusion::Schedule& sched,
                               int steps, Mode mode, std::uint64_t seed, bool redraw = false) {
  if (mode != Mode::msai && mode != Mode::msfi) throw ArgumentError("infer_multi_step: mode must be MSAI or MSFI");
  check_compatible(model, sched, mode);
  if (!model.config().uses_time()) throw ConsistencyError("multi-step inference requires a diffusion-trained noise branch");
  const auto ladder = diffusion::timestep_ladder(sched.steps(), steps);
  const auto b = training::make_batch<T>({&scene}, model.config());
  const auto ch = static_cast<std::size_t>(model.config().nn_target_channels());
  auto rng = training::derive_rng(seed, training::Stream::inference, 0);
  Matrix<T> x = detail::standard_normal<T>(b.size(), ch, rng);
  Prediction<T> p;
  Matrix<T> sum;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const int t = ladder[k];
    const bool last = k + 1 == ladder.size();
    if (redraw && k > 0) x = detail::standard_normal<T>(b.size(), ch, rng);
    Matrix<T> pred;
    auto logits = fused_logits(model, b, x, t, !last && !redraw, p.counters, &pred);
    if (k == 0) sum = logits;
    else
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += logits[i];
    if (mode == Mode::msfi || last) p.logits = logits;
    if (!last && !redraw) {
      const Matrix<T> eps = model.config().fit_target == nets::FitTarget::x0 ? detail::eps_from_x0(x, pred, t, sched) : pred;
      x = detail::ddim(x, eps, t, ladder[k + 1], sched);
    }
  }
  if (mode == Mode::msai && ladder.size() > 1) {
    p.logits = sum;
    for (auto& v : p.logits.flat()) v /= static_cast<T>(ladder.size());
  }
  detail::finish(p, scene);
  return p;
}

/// Predicts the noise of x_t at timestep t.
template <class T>
using Denoiser = std::function<Matrix<T>(const Matrix<T>& x_t, int t)>;

/// Reverse diffusion over a descending ladder from x_T. The x0 estimate is
/// clipped to [-1, 1] before each DDIM jump; `stochastic` runs ancestral
/// DDPM steps instead and requires the full unit ladder.
template <class T>
Matrix<T> sample_labels(Matrix<T> x, const std::vector<int>& ladder, const diffusion::Schedule& sched,
                        const Denoiser<T>& denoise, bool stochastic = false, std::mt19937_64* rng = nullptr) {
  if (stochastic && static_cast<int>(ladder.size()) != sched.steps())
    throw ArgumentError("sample_labels: stochastic sampling requires steps = T");
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const int t = ladder[k];
    const int t_prev = k + 1 < ladder.size() ? ladder[k + 1] : 0;
    Matrix<T> eps = denoise(x, t);
    if (stochastic) {
      Matrix<T> z(x.rows(), x.cols());
      if (t > 1) z = detail::standard_normal<T>(x.rows(), x.cols(), *rng);
      x = Matrix<T>(x.rows(), x.cols(), diffusion::ddpm_step<T>(x.flat(), eps.flat(), t, z.flat(), sched));
      continue;
    }
    auto x0v = diffusion::predict_x0_from_eps<T>(x.flat(), eps.flat(), t, sched);
    Matrix<T> x0(x.rows(), x.cols(), std::move(x0v));
    bool clipped = false;
    for (auto& v : x0.flat())
      if (v < T(-1) || v > T(1)) {
        v = std::clamp(v, T(-1), T(1));
        clipped = true;
      }
    if (clipped) eps = detail::eps_from_x0(x, x0, t, sched);
    x = detail::ddim(x, eps, t, t_prev, sched);
  }
  return x;
}

/// NCF-baseline inference: the noise branch denoises a K-channel label field
/// conditioned on the input features; `steps` NN passes.
template <class T>
Prediction<T> infer_ncf(nets::CnfModel<T>& model, const PreparedScene& scene, const diffusion::Schedule& sched, int steps,
                        std::uint64_t seed, bool stochastic = false) {
  check_compatible(model, sched, Mode::ncf);
  const auto ladder = stochastic ? diffusion::timestep_ladder(sched.steps(), sched.steps())
                                 : diffusion::timestep_ladder(sched.steps(), steps);
  const auto b = training::make_batch<T>({&scene}, model.config());
  auto rng = training::derive_rng(seed, training::Stream::inference, 0);
  Prediction<T> p;
  const auto k = static_cast<std::size_t>(model.config().num_classes);
  Denoiser<T> denoise = [&](const Matrix<T>& x_t, int t) {
    autograd::Graph<T> g(false);
    std::vector<int> ts(b.batch_size(), t);
    auto out = model.nn_forward(g, g.constant(x_t), b.inputs, ts, nets::DropPath{}, true, &p.counters);
    const Matrix<T>& pred = g.value(out.prediction);
    return model.config().fit_target == nets::FitTarget::x0 ? detail::eps_from_x0(x_t, pred, t, sched) : pred;
  };
  p.logits = sample_labels(detail::standard_normal<T>(b.size(), k, rng), ladder, sched, denoise, stochastic, &rng);
  detail::finish(p, scene);
  return p;
}

template <class T>
Prediction<T> infer(nets::CnfModel<T>& model, const PreparedScene& scene, const diffusion::Schedule& sched,
                    const InferenceSpec& spec) {
  validate(spec);
  switch (spec.mode) {
    case Mode::ssi: return infer_single_step(model, scene, sched, spec.seed);
    case Mode::msai:
    case Mode::msfi: return infer_multi_step(model, scene, sched, spec.steps, spec.mode, spec.seed, spec.redraw);
    case Mode::ncf: return infer_ncf(model, scene, sched, spec.steps, spec.seed, spec.stochastic);
  }
  throw ArgumentError("infer: unknown mode");
}

/// Default mode for a model: NCF sampling for ncf models, SSI otherwise.
inline InferenceSpec default_spec(nets::Framework fw, int ncf_steps, std::uint64_t seed) {
  InferenceSpec s;
  s.seed = seed;
  if (fw == nets::Framework::ncf) {
    s.mode = Mode::ncf;
    s.steps = ncf_steps;
  }
  return s;
}

/// Writes the original points with predicted labels in the canonical cloud
/// format, plus an optional per-voxel logits sidecar.
template <class T>
void save_prediction(const geometry::PointCloud& original, const Prediction<T>& p, const std::filesystem::path& path,
                     bool logits_sidecar = false) {
  geometry::PointCloud out = original;
  if (p.point_labels.size() != out.size()) throw ShapeError("save_prediction: prediction length differs from the cloud");
  out.labels = p.point_labels;
  geometry::save_cloud(out, path);
  if (logits_sidecar) {
    std::ofstream f(path.string() + ".logits.tsv");
    for (std::size_t i = 0; i < p.logits.rows(); ++i) {
      for (std::size_t c = 0; c < p.logits.cols(); ++c) f << (c ? "\t" : "") << p.logits(i, c);
      f << '\n';
    }
  }
}

}  // namespace cdseg::inference
