#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/geometry/point_cloud.hpp"
#include "cdseg/geometry/pooling.hpp"

namespace cdseg::geometry {

/// Majority label over `labels`, ignoring unlabeled entries; ties go to the
/// lowest class id. Returns kUnlabeled if nothing is labeled.
inline int majority_label(const std::vector<int>& labels, int num_classes) {
  std::vector<std::size_t> hist(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  bool any = false;
  for (int l : labels)
    if (l >= 0 && l < num_classes) {
      ++hist[static_cast<std::size_t>(l)];
      any = true;
    }
  if (!any) return kUnlabeled;
  std::size_t best = 0;
  for (std::size_t k = 1; k < hist.size(); ++k)
    if (hist[k] > hist[best]) best = k;
  return static_cast<int>(best);
}

struct VoxelizeResult {
  PointCloud cloud;
  PoolingMap map;  // original rows -> voxel rows
};

/// One output point per occupied voxel, in order of first occurrence. Voxel
/// position and features are member means; the label is the member majority.
inline VoxelizeResult voxelize(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ArgumentError("voxelize: voxel_size must be > 0");
  VoxelizeResult r;
  r.map.stride = 1;
  const std::size_t n = cloud.size();
  r.cloud.num_classes = cloud.num_classes;
  if (n == 0) {
    r.cloud.positions = Matrix<double>(0, 3);
    r.cloud.features = Matrix<double>(0, cloud.channels());
    return r;
  }
  r.map.parent.resize(n);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t b = 0; b < cloud.batch_size(); ++b) {
    std::map<std::array<std::int64_t, 3>, std::size_t> cells;
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i) {
      std::array<std::int64_t, 3> key{};
      for (std::size_t d = 0; d < 3; ++d)
        key[d] = static_cast<std::int64_t>(std::floor(cloud.positions(i, d) / voxel_size));
      auto [it, inserted] = cells.try_emplace(key, members.size());
      if (inserted) members.emplace_back();
      members[it->second].push_back(i);
      r.map.parent[i] = it->second;
    }
    r.cloud.offsets.push_back(members.size());
  }
  const std::size_t m = members.size();
  const std::size_t ch = cloud.channels();
  r.cloud.positions = Matrix<double>(m, 3);
  r.cloud.features = Matrix<double>(m, ch);
  r.cloud.labels.resize(m);
  r.map.counts.resize(m);
  std::vector<int> member_labels;
  for (std::size_t v = 0; v < m; ++v) {
    const auto& mem = members[v];
    r.map.counts[v] = mem.size();
    const double inv = 1.0 / static_cast<double>(mem.size());
    member_labels.clear();
    for (std::size_t i : mem) {
      for (std::size_t d = 0; d < 3; ++d) r.cloud.positions(v, d) += cloud.positions(i, d) * inv;
      for (std::size_t c = 0; c < ch; ++c) r.cloud.features(v, c) += cloud.features(i, c) * inv;
      member_labels.push_back(cloud.labels[i]);
    }
    r.cloud.labels[v] = majority_label(member_labels, cloud.num_classes);
  }
  return r;
}

/// Copies per-voxel values back to every original point.
template <class V>
std::vector<V> devoxelize(const std::vector<V>& per_voxel, const PoolingMap& map) {
  if (per_voxel.size() != map.coarse_size()) throw ShapeError("devoxelize: value count does not match voxel count");
  std::vector<V> out(map.fine_size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = per_voxel[map.parent[i]];
  return out;
}

}  // namespace cdseg::geometry
