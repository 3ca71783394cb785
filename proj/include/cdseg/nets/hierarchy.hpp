#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "cdseg/autograd/ops.hpp"
#include "cdseg/geometry/serialize.hpp"

namespace cdseg::nets {

using autograd::AttentionGroups;
using geometry::GridCoord;

/// One resolution of a batched point set.
struct Level {
  std::vector<GridCoord> coords;      // integer cell coordinates at this level
  std::vector<std::size_t> offsets;   // batch element ends
  std::vector<std::uint32_t> batch;   // batch element of every row
  std::array<geometry::SerializedOrder, 4> orders;
  std::array<AttentionGroups, 4> patches;  // contiguous serialized chunks per order

  std::size_t size() const noexcept { return coords.size(); }
};

/// Resolution pyramid: levels[0] is the input resolution and parent[l] maps
/// rows of level l onto rows of level l + 1.
struct Hierarchy {
  std::vector<Level> levels;
  std::vector<std::vector<std::uint32_t>> parent;
  std::vector<int> strides;

  std::size_t depth() const noexcept { return levels.size(); }
};

inline AttentionGroups chunk_patches(const geometry::SerializedOrder& order, const std::vector<std::size_t>& offsets,
                                     int patch_size) {
  AttentionGroups g;
  std::size_t lo = 0;
  std::vector<std::uint32_t> chunk;
  for (std::size_t hi : offsets) {
    for (std::size_t s = lo; s < hi; s += static_cast<std::size_t>(patch_size)) {
      const std::size_t e = std::min(hi, s + static_cast<std::size_t>(patch_size));
      chunk.assign(order.permutation.begin() + static_cast<std::ptrdiff_t>(s),
                   order.permutation.begin() + static_cast<std::ptrdiff_t>(e));
      g.add(chunk, chunk);
    }
    lo = hi;
  }
  return g;
}

inline Level make_level(std::vector<GridCoord> coords, std::vector<std::size_t> offsets, int patch_size) {
  Level l;
  l.coords = std::move(coords);
  l.offsets = std::move(offsets);
  l.batch.resize(l.coords.size());
  std::size_t lo = 0;
  for (std::size_t b = 0; b < l.offsets.size(); ++b) {
    for (std::size_t i = lo; i < l.offsets[b]; ++i) l.batch[i] = static_cast<std::uint32_t>(b);
    lo = l.offsets[b];
  }
  for (std::size_t o = 0; o < 4; ++o) {
    l.orders[o] = geometry::serialize_grid(l.coords, l.offsets, geometry::kAllOrders[o]);
    l.patches[o] = chunk_patches(l.orders[o], l.offsets, patch_size);
  }
  return l;
}

/// Builds the pyramid by repeated grid pooling: a row of level l belongs to
/// cell floor(coord / stride) of level l + 1. Coarse cells are numbered per
/// batch element in order of first occurrence.
inline Hierarchy build_hierarchy(std::vector<GridCoord> base, std::vector<std::size_t> offsets,
                                 const std::vector<int>& strides, int patch_size) {
  Hierarchy h;
  h.strides = strides;
  h.levels.push_back(make_level(std::move(base), std::move(offsets), patch_size));
  for (int stride : strides) {
    const Level& fine = h.levels.back();
    std::vector<std::uint32_t> parent(fine.size());
    std::vector<GridCoord> coarse;
    std::vector<std::size_t> coarse_offsets;
    std::size_t lo = 0;
    for (std::size_t hi : fine.offsets) {
      std::map<GridCoord, std::uint32_t> cells;
      for (std::size_t i = lo; i < hi; ++i) {
        GridCoord c{};
        for (std::size_t d = 0; d < 3; ++d) {
          const auto v = fine.coords[i][d];
          c[d] = v >= 0 ? v / stride : -((-v + stride - 1) / stride);
        }
        auto [it, inserted] = cells.try_emplace(c, static_cast<std::uint32_t>(coarse.size()));
        if (inserted) coarse.push_back(c);
        parent[i] = it->second;
      }
      coarse_offsets.push_back(coarse.size());
      lo = hi;
    }
    h.parent.push_back(std::move(parent));
    h.levels.push_back(make_level(std::move(coarse), std::move(coarse_offsets), patch_size));
  }
  return h;
}

/// Per batch element, all query rows of `q` attend to all rows of `k`.
inline AttentionGroups cross_groups(const Level& q, const Level& k) {
  AttentionGroups g;
  if (q.offsets.size() != k.offsets.size()) throw ConsistencyError("cross_groups: batch sizes differ");
  std::size_t qlo = 0, klo = 0;
  std::vector<std::uint32_t> qi, ki;
  for (std::size_t b = 0; b < q.offsets.size(); ++b) {
    qi.clear();
    ki.clear();
    for (std::size_t i = qlo; i < q.offsets[b]; ++i) qi.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t i = klo; i < k.offsets[b]; ++i) ki.push_back(static_cast<std::uint32_t>(i));
    g.add(qi, ki);
    qlo = q.offsets[b];
    klo = k.offsets[b];
  }
  return g;
}

/// Base grid coordinates of metric positions (N x 3, meters), relative to
/// each batch element's minimum corner.
inline std::vector<GridCoord> grid_coords(const Matrix<double>& positions, const std::vector<std::size_t>& offsets,
                                          double grid) {
  std::vector<GridCoord> out(positions.rows());
  std::size_t lo = 0;
  for (std::size_t hi : offsets) {
    std::array<double, 3> mn{1e300, 1e300, 1e300};
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t d = 0; d < 3; ++d) mn[d] = std::min(mn[d], positions(i, d));
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t d = 0; d < 3; ++d)
        out[i][d] = static_cast<std::int64_t>(std::floor((positions(i, d) - mn[d]) / grid));
    lo = hi;
  }
  return out;
}

}  // namespace cdseg::nets
