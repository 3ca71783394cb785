#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cdseg/diffusion/perturbation.hpp"
#include "cdseg/geometry/point_cloud.hpp"
#include "cdseg/geometry/transforms.hpp"
#include "cdseg/geometry/voxelize.hpp"
#include "cdseg/nets/model.hpp"

namespace cdseg::training {

/// A scene after voxelization and normalization, remembering how to map
/// voxel predictions back to the original points.
struct PreparedScene {
  geometry::PointCloud voxels;  // normalized positions
  geometry::NormalizationRecord norm;
  geometry::PoolingMap to_voxel;
  std::vector<int> point_labels;  // original per-point ground truth
};

inline PreparedScene prepare_scene(const geometry::PointCloud& scene, double voxel_size) {
  PreparedScene p;
  auto vox = geometry::voxelize(scene, voxel_size);
  auto [cloud, rec] = geometry::normalize(vox.cloud);
  p.voxels = std::move(cloud);
  p.norm = std::move(rec);
  p.to_voxel = std::move(vox.map);
  p.point_labels = scene.labels;
  return p;
}

/// Perturbs the normalized positions (and optionally features) of a copy.
template <class Rng>
PreparedScene perturb_scene(const PreparedScene& s, const diffusion::PerturbSpec& spec, Rng& rng, bool features = false) {
  PreparedScene out = s;
  out.voxels = geometry::perturb(s.voxels, spec, rng, features);
  return out;
}

/// Network-ready batch: owns both hierarchies so BatchInputs stay valid.
template <class T>
struct Batch {
  nets::BatchInputs<T> inputs;
  std::unique_ptr<nets::Hierarchy> nn_hierarchy, cn_hierarchy;
  std::vector<int> labels;           // per voxel
  std::vector<std::size_t> offsets;  // per batch element
  std::size_t size() const noexcept { return labels.size(); }
  std::size_t batch_size() const noexcept { return offsets.size(); }
};

template <class T>
Batch<T> make_batch(const std::vector<const PreparedScene*>& scenes, const nets::NetworkConfig& net) {
  if (scenes.empty()) throw ArgumentError("make_batch: no scenes");
  std::vector<const geometry::PointCloud*> parts;
  for (const auto* s : scenes) parts.push_back(&s->voxels);
  const auto cloud = geometry::concat(parts);
  if (static_cast<int>(cloud.channels()) != net.in_channels)
    throw ConfigError("network.in_channels", "data has " + std::to_string(cloud.channels()) + " feature channels, network expects " +
                                                 std::to_string(net.in_channels));
  Batch<T> b;
  b.labels = cloud.labels;
  b.offsets = cloud.offsets;
  b.inputs.coords = cloud.positions.cast<T>();
  b.inputs.features = cloud.features.cast<T>();

  // grid coordinates in metric units, per element
  Matrix<double> metric(cloud.size(), 3);
  for (std::size_t e = 0; e < scenes.size(); ++e) {
    const auto& rec = scenes[e]->norm;
    for (std::size_t i = cloud.begin_of(e); i < cloud.end_of(e); ++i)
      for (std::size_t d = 0; d < 3; ++d) metric(i, d) = cloud.positions(i, d) * rec.scale[0] + rec.center[0][d];
  }
  const auto base = nets::grid_coords(metric, cloud.offsets, net.grid_size);
  b.nn_hierarchy = std::make_unique<nets::Hierarchy>(nets::build_hierarchy(base, cloud.offsets, net.nn.strides, net.patch_size));
  b.cn_hierarchy = std::make_unique<nets::Hierarchy>(nets::build_hierarchy(base, cloud.offsets, net.cn.strides, net.patch_size));
  b.inputs.nn_hierarchy = b.nn_hierarchy.get();
  b.inputs.cn_hierarchy = b.cn_hierarchy.get();
  return b;
}

/// Clean quantity the noise network diffuses: features, positions, or
/// one-hot labels mapped to {-1, 1} (zero rows for unlabeled points).
template <class T>
Matrix<T> nn_target(const Batch<T>& b, const nets::NetworkConfig& net) {
  switch (net.nn_input) {
    case nets::NnInput::features: return b.inputs.features;
    case nets::NnInput::positions: return b.inputs.coords;
    case nets::NnInput::labels: {
      Matrix<T> x(b.size(), static_cast<std::size_t>(net.num_classes), T(-1));
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (b.labels[i] < 0) {
          for (auto& v : x.row(i)) v = T(0);
        } else {
          x(i, static_cast<std::size_t>(b.labels[i])) = T(1);
        }
      }
      return x;
    }
  }
  return {};
}

}  // namespace cdseg::training
