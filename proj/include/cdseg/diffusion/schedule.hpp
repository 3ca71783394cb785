#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "cdseg/core/error.hpp"

namespace cdseg::diffusion {

enum class ScheduleKind { linear, cosine };

inline const char* to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("schedule.kind", "unknown schedule kind '" + s + "' (expected linear|cosine)");
}

/// Precomputed variance tables of a Gaussian forward process.
///
/// Timesteps are 1-based throughout the public API: t in [1, T]. Index 0 of
/// alpha_bar() is the convention alpha_bar_0 = 1 so the t = 1 posterior and
/// full-jump DDIM steps are well defined.
class Schedule {
 public:
  Schedule() = default;

  ScheduleKind kind() const noexcept { return kind_; }
  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  std::pair<double, double> range() const noexcept { return range_; }

  double beta(int t) const { return beta_[checked(t, 1) - 1]; }
  double alpha(int t) const { return alpha_[checked(t, 1) - 1]; }
  double alpha_bar(int t) const { return checked(t, 0) == 0 ? 1.0 : alpha_bar_[t - 1]; }
  double posterior_var(int t) const { return posterior_var_[checked(t, 1) - 1]; }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alphas() const noexcept { return alpha_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  const std::vector<double>& posterior_vars() const noexcept { return posterior_var_; }

  /// Builds a schedule directly from beta values (used by tests that need
  /// hypothetical tables).
  static Schedule from_betas(ScheduleKind kind, std::vector<double> betas, std::pair<double, double> range) {
    if (betas.empty()) throw ConfigError("schedule.T", "T must be >= 1");
    Schedule s;
    s.kind_ = kind;
    s.range_ = range;
    s.beta_ = std::move(betas);
    const std::size_t n = s.beta_.size();
    s.alpha_.resize(n);
    s.alpha_bar_.resize(n);
    s.posterior_var_.resize(n);
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      s.alpha_[i] = 1.0 - s.beta_[i];
      prod *= s.alpha_[i];
      s.alpha_bar_[i] = prod;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ab_prev = i == 0 ? 1.0 : s.alpha_bar_[i - 1];
      s.posterior_var_[i] = (1.0 - ab_prev) / (1.0 - s.alpha_bar_[i]) * (1.0 - s.alpha_[i]);
    }
    return s;
  }

 private:
  int checked(int t, int lo) const {
    if (t < lo || t > steps())
      throw IndexError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(steps()) + "]");
    return t;
  }

  ScheduleKind kind_ = ScheduleKind::linear;
  std::pair<double, double> range_{0.0, 0.0};
  std::vector<double> beta_, alpha_, alpha_bar_, posterior_var_;
};

inline constexpr double kCosineOffset = 0.008;

/// Linear: beta interpolated between the range endpoints. A descending range
/// is accepted and normalized to ascending. Cosine: squared-cosine alpha_bar
/// with offset 0.008, beta clipped to [1e-8, 0.999]; the range is unused.
inline Schedule make_schedule(ScheduleKind kind, int T, std::pair<double, double> range) {
  if (T < 1) throw ConfigError("schedule.T", "T must be >= 1, got " + std::to_string(T));
  std::vector<double> betas(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    auto [lo, hi] = range;
    if (!(lo > 0.0)) throw ConfigError("schedule.range[0]", "linear endpoint must be positive");
    if (!(hi > 0.0)) throw ConfigError("schedule.range[1]", "linear endpoint must be positive");
    if (lo >= 1.0 || hi >= 1.0) throw ConfigError("schedule.range", "linear endpoints must be < 1");
    if (lo > hi) {
      spdlog::warn("schedule range [{}, {}] is descending; using [{}, {}]", lo, hi, hi, lo);
      std::swap(lo, hi);
    }
    range = {lo, hi};
    for (int i = 0; i < T; ++i)
      betas[i] = T == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(T - 1);
  } else {
    auto f = [T](double t) {
      const double c = std::cos((t / T + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0.0);
    for (int i = 1; i <= T; ++i) {
      const double b = 1.0 - (f(i) / f0) / (f(i - 1) / f0);
      betas[i - 1] = std::clamp(b, 1e-8, 0.999);
    }
  }
  return Schedule::from_betas(kind, std::move(betas), range);
}

}  // namespace cdseg::diffusion
