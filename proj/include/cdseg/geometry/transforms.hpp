#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cdseg/diffusion/perturbation.hpp"
#include "cdseg/geometry/point_cloud.hpp"

namespace cdseg::geometry {

/// Per-element center and scale such that normalized = (p - center) / scale.
struct NormalizationRecord {
  std::vector<std::array<double, 3>> center;
  std::vector<double> scale;
};

/// Centers each batch element on its bounding-box midpoint and divides by
/// the largest extent, so positions land in [-0.5, 0.5]^3.
inline std::pair<PointCloud, NormalizationRecord> normalize(const PointCloud& cloud) {
  PointCloud out = cloud;
  NormalizationRecord rec;
  for (std::size_t b = 0; b < cloud.batch_size(); ++b) {
    std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i)
      for (std::size_t d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], cloud.positions(i, d));
        hi[d] = std::max(hi[d], cloud.positions(i, d));
      }
    std::array<double, 3> c{};
    double s = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
      c[d] = 0.5 * (lo[d] + hi[d]);
      s = std::max(s, hi[d] - lo[d]);
    }
    if (!(s > 0.0)) s = 1.0;
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i)
      for (std::size_t d = 0; d < 3; ++d) out.positions(i, d) = (cloud.positions(i, d) - c[d]) / s;
    rec.center.push_back(c);
    rec.scale.push_back(s);
  }
  return {std::move(out), std::move(rec)};
}

inline PointCloud denormalize(const PointCloud& cloud, const NormalizationRecord& rec) {
  PointCloud out = cloud;
  for (std::size_t b = 0; b < cloud.batch_size(); ++b)
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i)
      for (std::size_t d = 0; d < 3; ++d) out.positions(i, d) = cloud.positions(i, d) * rec.scale[b] + rec.center[b][d];
  return out;
}

/// Adds perturbation noise to positions, and to features when requested.
/// Labels and offsets are copied unchanged.
template <class Rng>
PointCloud perturb(const PointCloud& cloud, const diffusion::PerturbSpec& spec, Rng& rng, bool features = false) {
  PointCloud out = cloud;
  if (spec.tau == 0.0) return out;
  auto np = diffusion::sample_perturbation(spec, out.positions.size(), rng);
  for (std::size_t i = 0; i < np.size(); ++i) out.positions[i] += np[i];
  if (features) {
    auto nf = diffusion::sample_perturbation(spec, out.features.size(), rng);
    for (std::size_t i = 0; i < nf.size(); ++i) out.features[i] += nf[i];
  }
  return out;
}

/// Uniform selection without replacement of round(fraction * n) items (at
/// least one); the kept indices are returned in ascending order.
template <class Rng>
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("subsample: fraction must be in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction == 1.0 || n == 0) return idx;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  // partial Fisher-Yates
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class Scene, class Rng>
std::vector<Scene> subsample_dataset(const std::vector<Scene>& scenes, double fraction, Rng& rng) {
  std::vector<Scene> out;
  for (std::size_t i : subsample_indices(scenes.size(), fraction, rng)) out.push_back(scenes[i]);
  return out;
}

}  // namespace cdseg::geometry
