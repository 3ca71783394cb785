#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"

namespace cdseg::diffusion {

enum class NoiseFamily { gaussian, uniform, laplace, poisson };

inline const char* to_string(NoiseFamily d) {
  switch (d) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::poisson: return "poisson";
  }
  return "?";
}

inline NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "uniform") return NoiseFamily::uniform;
  if (s == "laplace") return NoiseFamily::laplace;
  if (s == "poisson") return NoiseFamily::poisson;
  throw ConfigError("dist", "unknown noise family '" + s + "'");
}

/// Noise family plus its standard deviation tau.
struct PerturbSpec {
  NoiseFamily dist = NoiseFamily::gaussian;
  double tau = 0.0;
};

/// Zero-mean, unit-variance draw from one family:
/// uniform U(-sqrt3, sqrt3), laplace Laplace(0, 1/sqrt2), poisson Pois(1) - 1.
template <class Rng>
double standardized_draw(NoiseFamily dist, Rng& rng) {
  switch (dist) {
    case NoiseFamily::gaussian: return std::normal_distribution<double>(0.0, 1.0)(rng);
    case NoiseFamily::uniform: return std::uniform_real_distribution<double>(-std::sqrt(3.0), std::sqrt(3.0))(rng);
    case NoiseFamily::laplace: {
      const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      const double b = 1.0 / std::sqrt(2.0);
      const double s = u < 0 ? -1.0 : 1.0;
      return -b * s * std::log1p(-2.0 * std::abs(u));
    }
    case NoiseFamily::poisson: return static_cast<double>(std::poisson_distribution<int>(1.0)(rng)) - 1.0;
  }
  throw ConfigError("dist", "unknown noise family");
}

template <class Rng>
std::vector<double> sample_perturbation(const PerturbSpec& spec, std::size_t count, Rng& rng) {
  if (!(spec.tau >= 0.0)) throw ConfigError("tau", "tau must be >= 0");
  std::vector<double> out(count, 0.0);
  if (spec.tau == 0.0) return out;
  for (auto& v : out) v = spec.tau * standardized_draw(spec.dist, rng);
  return out;
}

}  // namespace cdseg::diffusion
