#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "cdseg/autograd/ops.hpp"

namespace cdseg::training {

enum class LossStrategy { ew, rlw, uw, gls };

inline std::string to_string(LossStrategy s) {
  switch (s) {
    case LossStrategy::ew: return "EW";
    case LossStrategy::rlw: return "RLW";
    case LossStrategy::uw: return "UW";
    case LossStrategy::gls: return "GLS";
  }
  return "?";
}

inline LossStrategy loss_strategy_from_string(const std::string& s) {
  if (s == "EW" || s == "ew") return LossStrategy::ew;
  if (s == "RLW" || s == "rlw") return LossStrategy::rlw;
  if (s == "UW" || s == "uw") return LossStrategy::uw;
  if (s == "GLS" || s == "gls") return LossStrategy::gls;
  throw ConfigError("loss.strategy", "unknown strategy '" + s + "' (expected EW, RLW, UW or GLS)");
}

inline constexpr double kGlsFloor = 1e-12;

/// Learnable per-task log-variances for UW; unused by the other strategies.
template <class T>
struct BalanceState {
  std::vector<autograd::Parameter<T>> log_var;

  explicit BalanceState(std::size_t tasks = 2) : log_var(tasks) {
    for (std::size_t i = 0; i < tasks; ++i) {
      log_var[i].name = "balance.log_var." + std::to_string(i);
      log_var[i].value = Matrix<T>(1, 1);
      log_var[i].grad = Matrix<T>(1, 1);
    }
  }
};

struct Combined {
  autograd::Var total;
  std::vector<double> weights;  // effective d total / d L_i
};

/// Combines per-task scalar losses (1x1 nodes).
template <class T>
Combined combine_losses(autograd::Graph<T>& g, LossStrategy strategy, const std::vector<autograd::Var>& losses,
                        BalanceState<T>& state, std::mt19937_64& rng) {
  using namespace autograd;
  const std::size_t n = losses.size();
  if (n == 0) throw ArgumentError("combine_losses: no losses");
  Combined c;
  c.weights.assign(n, 1.0);
  switch (strategy) {
    case LossStrategy::ew: {
      c.total = losses[0];
      for (std::size_t i = 1; i < n; ++i) c.total = add(g, c.total, losses[i]);
      break;
    }
    case LossStrategy::rlw: {
      std::normal_distribution<double> nd;
      std::vector<double> z(n);
      double mx = -1e300, s = 0;
      for (auto& v : z) mx = std::max(mx, v = nd(rng));
      for (auto& v : z) s += (v = std::exp(v - mx));
      for (std::size_t i = 0; i < n; ++i) {
        c.weights[i] = z[i] / s;
        Var term = scale(g, losses[i], static_cast<T>(c.weights[i]));
        c.total = i == 0 ? term : add(g, c.total, term);
      }
      break;
    }
    case LossStrategy::uw: {
      if (state.log_var.size() != n) throw ShapeError("combine_losses: UW state has wrong task count");
      for (std::size_t i = 0; i < n; ++i) {
        Var s = g.param(state.log_var[i]);
        Var w = exp_op(g, scale(g, s, T(-1)));
        c.weights[i] = static_cast<double>(g.value(w)[0]);
        Var term = add(g, mul(g, w, losses[i]), s);
        c.total = i == 0 ? term : add(g, c.total, term);
      }
      break;
    }
    case LossStrategy::gls: {
      std::vector<Var> clamped(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!(g.value(losses[i])[0] > T(kGlsFloor)))
          spdlog::warn("GLS: loss {} is {} <= {}, clamped", i, static_cast<double>(g.value(losses[i])[0]), kGlsFloor);
        clamped[i] = clamp_min(g, losses[i], static_cast<T>(kGlsFloor));
      }
      Var prod = clamped[0];
      for (std::size_t i = 1; i < n; ++i) prod = mul(g, prod, clamped[i]);
      if (n == 1) {
        c.total = prod;
      } else if (n == 2) {
        c.total = sqrt_op(g, prod);
      } else {
        const T root = T(1) / static_cast<T>(n);
        const T y = std::pow(g.value(prod)[0], root);
        c.total = g.push(Matrix<T>(1, 1, y), g.any_requires_grad({prod}), [&g, prod, root, y, out = g.size()] {
          g.grad(prod)[0] += g.grad(Var{out})[0] * root * y / g.value(prod)[0];
        });
      }
      const double total = static_cast<double>(g.value(c.total)[0]);
      for (std::size_t i = 0; i < n; ++i)
        c.weights[i] = total / (static_cast<double>(n) * static_cast<double>(g.value(clamped[i])[0]));
      break;
    }
  }
  return c;
}

/// Value-only form: returns (total, weights).
inline std::pair<double, std::vector<double>> combine_losses(LossStrategy strategy, const std::vector<double>& losses,
                                                             BalanceState<double>& state, std::mt19937_64& rng) {
  autograd::Graph<double> g(false);
  std::vector<autograd::Var> vs;
  for (double l : losses) vs.push_back(g.constant(Matrix<double>(1, 1, l)));
  auto c = combine_losses(g, strategy, vs, state, rng);
  return {g.value(c.total)[0], c.weights};
}

}  // namespace cdseg::training
