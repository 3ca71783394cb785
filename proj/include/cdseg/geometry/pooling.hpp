#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/core/matrix.hpp"

namespace cdseg::geometry {

/// Many-to-one assignment of fine rows to coarse cells.
struct PoolingMap {
  std::vector<std::size_t> parent;  // fine row -> coarse cell
  std::vector<std::size_t> counts;  // members per coarse cell
  int stride = 1;

  std::size_t fine_size() const noexcept { return parent.size(); }
  std::size_t coarse_size() const noexcept { return counts.size(); }
};

enum class PoolMode { max, mean };

inline void check_map(const PoolingMap& map) {
  std::vector<std::size_t> seen(map.counts.size(), 0);
  for (std::size_t p : map.parent) {
    if (p >= map.counts.size()) throw ShapeError("PoolingMap: parent index out of range");
    ++seen[p];
  }
  if (seen != map.counts) throw ShapeError("PoolingMap: counts do not match parent assignment");
}

/// Builds counts from a parent assignment; cell ids must be dense in [0, M).
inline PoolingMap make_pooling_map(std::vector<std::size_t> parent, std::size_t cells, int stride) {
  PoolingMap m;
  m.parent = std::move(parent);
  m.counts.assign(cells, 0);
  m.stride = stride;
  for (std::size_t p : m.parent) {
    if (p >= cells) throw ShapeError("make_pooling_map: parent index out of range");
    ++m.counts[p];
  }
  return m;
}

template <class T>
Matrix<T> grid_pool(const Matrix<T>& fine, const PoolingMap& map, PoolMode mode) {
  if (fine.rows() != map.fine_size())
    throw ShapeError("grid_pool: feature rows " + std::to_string(fine.rows()) + " do not match map size " +
                     std::to_string(map.fine_size()));
  const std::size_t c = fine.cols();
  Matrix<T> out(map.coarse_size(), c, mode == PoolMode::max ? std::numeric_limits<T>::lowest() : T{});
  for (std::size_t i = 0; i < fine.rows(); ++i) {
    auto dst = out.row(map.parent[i]);
    auto src = fine.row(i);
    if (mode == PoolMode::max)
      for (std::size_t k = 0; k < c; ++k) dst[k] = std::max(dst[k], src[k]);
    else
      for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
  }
  if (mode == PoolMode::mean) {
    for (std::size_t m = 0; m < out.rows(); ++m) {
      if (map.counts[m] == 0) throw ShapeError("grid_pool: empty coarse cell");
      const T inv = T(1) / static_cast<T>(map.counts[m]);
      for (auto& v : out.row(m)) v *= inv;
    }
  }
  return out;
}

template <class T>
Matrix<T> grid_unpool(const Matrix<T>& coarse, const PoolingMap& map) {
  if (coarse.rows() != map.coarse_size())
    throw ShapeError("grid_unpool: coarse rows " + std::to_string(coarse.rows()) + " do not match map cells " +
                     std::to_string(map.coarse_size()));
  Matrix<T> out(map.fine_size(), coarse.cols());
  for (std::size_t i = 0; i < map.fine_size(); ++i) {
    auto src = coarse.row(map.parent[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace cdseg::geometry
