#pragma once

#include <cmath>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/core/matrix.hpp"

namespace cdseg::nets {

/// Sinusoidal timestep embedding: dim/2 frequencies spaced geometrically from
/// 1 down to 1e-4, laid out as [sin(t f_0..f_{h-1}), cos(t f_0..f_{h-1})].
template <class T = double>
Matrix<T> time_embed(const std::vector<int>& t, int dim) {
  if (dim < 2 || dim % 2) throw ConfigError("time_embed_dim", "must be even and >= 2");
  const int half = dim / 2;
  Matrix<T> out(t.size(), static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < t.size(); ++i)
    for (int k = 0; k < half; ++k) {
      const double f = half == 1 ? 1.0 : std::exp(-std::log(1e4) * k / (half - 1));
      const double a = static_cast<double>(t[i]) * f;
      out(i, static_cast<std::size_t>(k)) = static_cast<T>(std::sin(a));
      out(i, static_cast<std::size_t>(half + k)) = static_cast<T>(std::cos(a));
    }
  return out;
}

}  // namespace cdseg::nets
