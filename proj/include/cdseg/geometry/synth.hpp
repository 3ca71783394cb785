#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/geometry/point_cloud.hpp"

namespace cdseg::geometry {

/// Parameters of a synthetic labeled room.
struct SceneSpec {
  int num_points = 2000;
  int num_classes = 4;
  std::array<double, 3> room{3.0, 3.0, 2.0};  // x, y extents and wall height, meters
  double room_jitter = 0.1;                   // relative per-scene extent jitter
  int blob_count = -1;                        // -1: two blobs per object class
  double blob_size = 1.0;                     // multiplier on the per-class blob radii
  double feature_noise = 0.1;                 // std of the pseudo-color noise
  double position_noise = 0.005;              // meters
  unsigned long long seed = 0;
};

/// Number of feature channels produced by synth_scene: rgb + unit normal.
inline constexpr int kSynthChannels = 6;
inline constexpr int kSynthNormalOffset = 3;

namespace detail {

inline std::array<double, 3> class_color(int k) {
  // Evenly spaced hues at full saturation.
  const double h = std::fmod(0.618033988749895 * k, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  switch (static_cast<int>(h)) {
    case 0: return {1, x, 0};
    case 1: return {x, 1, 0};
    case 2: return {0, 1, x};
    case 3: return {0, x, 1};
    case 4: return {x, 0, 1};
    default: return {1, 0, x};
  }
}

/// Semi-axes of the blob shape used for object class k (k >= 2).
inline std::array<double, 3> class_radii(int k) {
  static constexpr std::array<std::array<double, 3>, 4> shapes{{
      {0.22, 0.22, 0.55},  // tall
      {0.50, 0.35, 0.18},  // flat
      {0.30, 0.30, 0.30},  // round
      {0.60, 0.15, 0.30},  // long
  }};
  const auto& s = shapes[static_cast<std::size_t>(k - 2) % shapes.size()];
  const double grow = 1.0 + 0.1 * static_cast<double>((k - 2) / static_cast<int>(shapes.size()));
  return {s[0] * grow, s[1] * grow, s[2] * grow};
}

}  // namespace detail

/// Generates a room with floor (class 0), four walls (class 1) and
/// ellipsoidal blobs resting on the floor (classes 2..K-1). Features are an
/// rgb pseudo-color around a per-class base color plus the analytic normal.
template <class Rng>
PointCloud synth_scene(const SceneSpec& spec, Rng& rng) {
  if (spec.num_points <= 0) throw GenerationError("synth_scene: num_points must be > 0");
  if (spec.num_classes < 2) throw GenerationError("synth_scene: num_classes must be >= 2");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::array<double, 3> room{};
  for (std::size_t d = 0; d < 3; ++d) room[d] = spec.room[d] * (1.0 + spec.room_jitter * (2.0 * unit(rng) - 1.0));

  struct Blob {
    std::array<double, 3> center, radii;
    int label;
  };
  std::vector<Blob> blobs;
  const int object_classes = spec.num_classes - 2;
  const int blob_count = object_classes <= 0 ? 0 : (spec.blob_count < 0 ? 2 * object_classes : spec.blob_count);
  // returns the index of the first blob that did not fit, or -1
  const auto place_all = [&] {
    blobs.clear();
    for (int j = 0; j < blob_count; ++j) {
      const int label = 2 + j % object_classes;
      auto radii = detail::class_radii(label);
      for (auto& r : radii) r *= spec.blob_size * (0.85 + 0.3 * unit(rng));
      bool placed = false;
      for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
        const double margin_x = radii[0] + 0.1, margin_y = radii[1] + 0.1;
        if (2 * margin_x >= room[0] || 2 * margin_y >= room[1]) break;
        std::array<double, 3> c{margin_x + unit(rng) * (room[0] - 2 * margin_x),
                                margin_y + unit(rng) * (room[1] - 2 * margin_y), radii[2]};
        placed = std::all_of(blobs.begin(), blobs.end(), [&](const Blob& o) {
          const double dx = c[0] - o.center[0], dy = c[1] - o.center[1];
          const double need = std::max(radii[0], radii[1]) + std::max(o.radii[0], o.radii[1]) + 0.05;
          return dx * dx + dy * dy > need * need;
        });
        if (placed) blobs.push_back({c, radii, label});
      }
      if (!placed) return j;
    }
    return -1;
  };
  int failed = place_all();
  for (int layout = 1; layout < 20 && failed >= 0; ++layout) failed = place_all();
  if (failed >= 0)
    throw GenerationError("synth_scene: could not place blob " + std::to_string(failed) + " of " +
                          std::to_string(blob_count) + " without overlap; reduce blob_count");

  const double floor_share = blobs.empty() ? 0.5 : 0.3;
  const double wall_share = blobs.empty() ? 0.5 : 0.3;
  const auto n = static_cast<std::size_t>(spec.num_points);
  const auto n_floor = static_cast<std::size_t>(std::llround(floor_share * static_cast<double>(n)));
  const auto n_wall = blobs.empty() ? n - n_floor
                                    : static_cast<std::size_t>(std::llround(wall_share * static_cast<double>(n)));
  const std::size_t n_blobs = n - n_floor - n_wall;

  PointCloud cloud;
  cloud.num_classes = spec.num_classes;
  cloud.positions = Matrix<double>(n, 3);
  cloud.features = Matrix<double>(n, kSynthChannels);
  cloud.labels.resize(n);
  cloud.offsets = {n};

  std::size_t row = 0;
  auto emit = [&](std::array<double, 3> p, std::array<double, 3> normal, int label) {
    const auto base = detail::class_color(label);
    for (std::size_t d = 0; d < 3; ++d) {
      cloud.positions(row, d) = p[d] + spec.position_noise * gauss(rng);
      cloud.features(row, d) = std::clamp(base[d] + spec.feature_noise * gauss(rng), 0.0, 1.0);
      cloud.features(row, kSynthNormalOffset + d) = normal[d];
    }
    cloud.labels[row] = label;
    ++row;
  };

  for (std::size_t i = 0; i < n_floor; ++i) emit({unit(rng) * room[0], unit(rng) * room[1], 0.0}, {0, 0, 1}, 0);

  const double wx = room[0] * room[2], wy = room[1] * room[2];
  for (std::size_t i = 0; i < n_wall; ++i) {
    const double pick = unit(rng) * 2.0 * (wx + wy);
    const double h = unit(rng) * room[2];
    if (pick < wx) emit({unit(rng) * room[0], 0.0, h}, {0, 1, 0}, 1);
    else if (pick < 2 * wx) emit({unit(rng) * room[0], room[1], h}, {0, -1, 0}, 1);
    else if (pick < 2 * wx + wy) emit({0.0, unit(rng) * room[1], h}, {1, 0, 0}, 1);
    else emit({room[0], unit(rng) * room[1], h}, {-1, 0, 0}, 1);
  }

  for (std::size_t i = 0; i < n_blobs; ++i) {
    const Blob& b = blobs[i % blobs.size()];
    std::array<double, 3> u{};
    double len = 0.0;
    do {
      for (auto& v : u) v = gauss(rng);
      len = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    } while (len < 1e-9);
    std::array<double, 3> p{}, nrm{};
    double nl = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
      u[d] /= len;
      p[d] = b.center[d] + b.radii[d] * u[d];
      nrm[d] = u[d] / b.radii[d];
      nl += nrm[d] * nrm[d];
    }
    nl = std::sqrt(nl);
    for (auto& v : nrm) v /= nl;
    emit(p, nrm, b.label);
  }
  return cloud;
}

}  // namespace cdseg::geometry
