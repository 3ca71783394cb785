#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "cdseg/autograd/graph.hpp"

namespace cdseg::training {

struct AdamWConfig {
  double lr = 2e-3;
  double block_lr = 2e-4;
  double weight_decay = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> grad_clip;
};

/// Cosine decay from `base` at step 0 to 0 at `total` steps.
inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

/// AdamW with decoupled weight decay. Parameters in the block group use
/// block_lr, the rest lr; both follow the same schedule factor.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }
  std::vector<Matrix<T>>& first_moments() noexcept { return m_; }
  std::vector<Matrix<T>>& second_moments() noexcept { return v_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }
  void set_steps(std::size_t t) noexcept { t_ = t; }

  /// L2 norm of all gradients, before clipping.
  static double grad_norm(const std::vector<autograd::Parameter<T>*>& params) {
    double s = 0;
    for (const auto* p : params)
      for (T g : p->grad.flat()) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  /// One update with the schedule factor `lr_scale` in [0, 1]; returns the
  /// pre-clip gradient norm.
  double step(const std::vector<autograd::Parameter<T>*>& params, double lr_scale) {
    ensure(params);
    const double norm = grad_norm(params);
    double clip = 1.0;
    if (cfg_.grad_clip && norm > *cfg_.grad_clip) clip = *cfg_.grad_clip / (norm + 1e-12);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const double lr = lr_scale * (p.group == autograd::ParamGroup::block ? cfg_.block_lr : cfg_.lr);
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = static_cast<double>(p.grad[k]) * clip;
        const double mk = cfg_.beta1 * static_cast<double>(m[k]) + (1 - cfg_.beta1) * g;
        const double vk = cfg_.beta2 * static_cast<double>(v[k]) + (1 - cfg_.beta2) * g * g;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        double w = static_cast<double>(p.value[k]);
        w -= lr * cfg_.weight_decay * w;
        w -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
        p.value[k] = static_cast<T>(w);
      }
    }
    return norm;
  }

 private:
  void ensure(const std::vector<autograd::Parameter<T>*>& params) {
    if (m_.size() == params.size()) return;
    m_.clear();
    v_.clear();
    for (const auto* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

}  // namespace cdseg::training
