#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/diffusion/schedule.hpp"

namespace cdseg::diffusion {

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}
}  // namespace detail

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <class T>
std::vector<T> q_sample(std::span<const T> x0, int t, std::span<const T> eps, const Schedule& sched) {
  detail::require_same_size(x0.size(), eps.size(), "q_sample");
  const double ab = sched.alpha_bar(t);
  if (t < 1) throw IndexError("q_sample: t must be >= 1");
  const T a = static_cast<T>(std::sqrt(ab));
  const T b = static_cast<T>(std::sqrt(1.0 - ab));
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

template <class T>
std::vector<T> predict_x0_from_eps(std::span<const T> x_t, std::span<const T> eps, int t, const Schedule& sched) {
  detail::require_same_size(x_t.size(), eps.size(), "predict_x0_from_eps");
  if (t < 1) throw IndexError("predict_x0_from_eps: t must be >= 1");
  const double ab = sched.alpha_bar(t);
  const double s = std::sqrt(1.0 - ab);
  const double inv = 1.0 / std::sqrt(ab);
  std::vector<T> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    out[i] = static_cast<T>((static_cast<double>(x_t[i]) - s * static_cast<double>(eps[i])) * inv);
  return out;
}

template <class T>
struct Posterior {
  std::vector<T> mean;
  double var = 0.0;
};

/// Mean and variance of q(x_{t-1} | x_t, x0).
template <class T>
Posterior<T> posterior_params(std::span<const T> x_t, std::span<const T> x0, int t, const Schedule& sched) {
  detail::require_same_size(x_t.size(), x0.size(), "posterior_params");
  if (t < 1 || t > sched.steps()) throw IndexError("posterior_params: t out of range");
  const double a = sched.alpha(t);
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double cx = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  const double c0 = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  Posterior<T> p;
  p.mean.resize(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    p.mean[i] = static_cast<T>(cx * static_cast<double>(x_t[i]) + c0 * static_cast<double>(x0[i]));
  p.var = sched.posterior_var(t);
  return p;
}

/// mu = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps) / sqrt(alpha_t)
template <class T>
std::vector<T> posterior_mean_from_eps(std::span<const T> x_t, std::span<const T> eps, int t, const Schedule& sched) {
  detail::require_same_size(x_t.size(), eps.size(), "posterior_mean_from_eps");
  if (t < 1 || t > sched.steps()) throw IndexError("posterior_mean_from_eps: t out of range");
  const double a = sched.alpha(t);
  const double k = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(a);
  std::vector<T> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    out[i] = static_cast<T>((static_cast<double>(x_t[i]) - k * static_cast<double>(eps[i])) * inv);
  return out;
}

/// score = -eps / sqrt(1 - abar_t)
template <class T>
std::vector<T> score_from_eps(std::span<const T> eps_pred, int t, const Schedule& sched) {
  if (t < 1) throw IndexError("score_from_eps: t must be >= 1");
  const double f = -1.0 / std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<T> out(eps_pred.size());
  for (std::size_t i = 0; i < eps_pred.size(); ++i) out[i] = static_cast<T>(f * static_cast<double>(eps_pred[i]));
  return out;
}

template <class T>
std::vector<T> eps_from_score(std::span<const T> score, int t, const Schedule& sched) {
  if (t < 1) throw IndexError("eps_from_score: t must be >= 1");
  const double f = -std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<T> out(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) out[i] = static_cast<T>(f * static_cast<double>(score[i]));
  return out;
}

/// One ancestral sampling step. `z` is ignored (treated as zero) at t = 1.
template <class T>
std::vector<T> ddpm_step(std::span<const T> x_t, std::span<const T> eps_pred, int t, std::span<const T> z,
                         const Schedule& sched) {
  if (t < 1) throw IndexError("ddpm_step: t must be >= 1");
  auto out = posterior_mean_from_eps<T>(x_t, eps_pred, t, sched);
  if (t == 1) return out;
  detail::require_same_size(x_t.size(), z.size(), "ddpm_step");
  const double sd = std::sqrt(sched.posterior_var(t));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<T>(sd * static_cast<double>(z[i]));
  return out;
}

/// Deterministic (eta = 0) DDIM jump from t to t_prev; t_prev = 0 returns the
/// x0 prediction.
template <class T>
std::vector<T> ddim_step(std::span<const T> x_t, std::span<const T> eps_pred, int t, int t_prev,
                         const Schedule& sched) {
  if (!(t_prev < t)) throw ArgumentError("ddim_step: t_prev must be < t");
  if (t_prev < 0 || t > sched.steps()) throw ArgumentError("ddim_step: timesteps outside [0, T]");
  auto x0 = predict_x0_from_eps<T>(x_t, eps_pred, t, sched);
  const double ab_prev = sched.alpha_bar(t_prev);
  const double a = std::sqrt(ab_prev);
  const double b = std::sqrt(1.0 - ab_prev);
  for (std::size_t i = 0; i < x0.size(); ++i)
    x0[i] = static_cast<T>(a * static_cast<double>(x0[i]) + b * static_cast<double>(eps_pred[i]));
  return x0;
}

/// Evenly spaced descending ladder of `steps` timesteps that includes T and 1
/// (a single step uses T alone).
inline std::vector<int> timestep_ladder(int T, int steps) {
  if (steps < 1) throw ArgumentError("timestep_ladder: steps must be >= 1");
  if (steps > T) throw ArgumentError("timestep_ladder: steps must be <= T");
  std::vector<int> ladder;
  if (steps == 1) return {T};
  for (int i = 0; i < steps; ++i) {
    const double pos = static_cast<double>(T) - static_cast<double>(i) * (T - 1) / (steps - 1);
    ladder.push_back(static_cast<int>(std::lround(pos)));
  }
  return ladder;
}

}  // namespace cdseg::diffusion
