#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/core/matrix.hpp"

namespace cdseg::geometry {

inline constexpr int kUnlabeled = -1;

/// A batch of point clouds. Rows of `positions`, `features` and `labels` are
/// concatenated per batch element; `offsets` holds the exclusive end index of
/// each element, so `offsets.back() == size()`.
struct PointCloud {
  Matrix<double> positions;  // N x 3, meters
  Matrix<double> features;   // N x C
  std::vector<int> labels;   // N, in [-1, K)
  std::vector<std::size_t> offsets;
  int num_classes = 0;

  std::size_t size() const noexcept { return positions.rows(); }
  std::size_t channels() const noexcept { return features.cols(); }
  std::size_t batch_size() const noexcept { return offsets.size(); }
  std::size_t begin_of(std::size_t b) const noexcept { return b == 0 ? 0 : offsets[b - 1]; }
  std::size_t end_of(std::size_t b) const noexcept { return offsets[b]; }

  /// Batch index of every row.
  std::vector<std::size_t> batch_index() const {
    std::vector<std::size_t> out(size());
    for (std::size_t b = 0; b < batch_size(); ++b)
      for (std::size_t i = begin_of(b); i < end_of(b); ++i) out[i] = b;
    return out;
  }

  PointCloud element(std::size_t b) const {
    PointCloud out;
    const std::size_t lo = begin_of(b), hi = end_of(b), n = hi - lo;
    out.positions = Matrix<double>(n, 3);
    out.features = Matrix<double>(n, channels());
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(lo), labels.begin() + static_cast<std::ptrdiff_t>(hi));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < 3; ++d) out.positions(i, d) = positions(lo + i, d);
      for (std::size_t c = 0; c < channels(); ++c) out.features(i, c) = features(lo + i, c);
    }
    out.offsets = {n};
    out.num_classes = num_classes;
    return out;
  }
};

/// Throws ShapeError / ArgumentError on violated invariants. `normal_offset`
/// gives the first of three unit-normal feature channels, or -1 if none.
inline void validate(const PointCloud& c, int normal_offset = -1) {
  const std::size_t n = c.size();
  if (c.positions.cols() != 3 && n > 0) throw ShapeError("PointCloud: positions must be N x 3");
  if (c.features.rows() != n) throw ShapeError("PointCloud: features row count differs from positions");
  if (c.labels.size() != n) throw ShapeError("PointCloud: label count differs from positions");
  if (n == 0 && c.offsets.empty()) return;
  if (c.offsets.empty() || c.offsets.back() != n) throw ShapeError("PointCloud: offsets must end at N");
  for (std::size_t i = 1; i < c.offsets.size(); ++i)
    if (c.offsets[i] <= c.offsets[i - 1]) throw ShapeError("PointCloud: offsets must be strictly increasing");
  if (c.offsets.front() == 0) throw ShapeError("PointCloud: offsets must be strictly increasing");
  for (int l : c.labels)
    if (l < kUnlabeled || l >= c.num_classes)
      throw ArgumentError("PointCloud: label " + std::to_string(l) + " outside [-1, " + std::to_string(c.num_classes) + ")");
  if (normal_offset >= 0) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (int d = 0; d < 3; ++d) s += c.features(i, static_cast<std::size_t>(normal_offset + d)) *
                                       c.features(i, static_cast<std::size_t>(normal_offset + d));
      if (std::abs(std::sqrt(s) - 1.0) > 1e-3) throw ArgumentError("PointCloud: normal at row " + std::to_string(i) + " is not unit length");
    }
  }
}

/// Concatenates clouds into one batch. All inputs must share C and K.
inline PointCloud concat(const std::vector<const PointCloud*>& parts) {
  PointCloud out;
  if (parts.empty()) return out;
  std::size_t n = 0;
  const std::size_t ch = parts.front()->channels();
  for (auto* p : parts) {
    if (p->channels() != ch) throw ShapeError("concat: channel count differs between clouds");
    n += p->size();
  }
  out.positions = Matrix<double>(n, 3);
  out.features = Matrix<double>(n, ch);
  out.labels.reserve(n);
  out.num_classes = parts.front()->num_classes;
  std::size_t row = 0;
  for (auto* p : parts) {
    out.num_classes = std::max(out.num_classes, p->num_classes);
    for (std::size_t b = 0; b < p->batch_size(); ++b) {
      for (std::size_t i = p->begin_of(b); i < p->end_of(b); ++i, ++row) {
        for (std::size_t d = 0; d < 3; ++d) out.positions(row, d) = p->positions(i, d);
        for (std::size_t c = 0; c < ch; ++c) out.features(row, c) = p->features(i, c);
        out.labels.push_back(p->labels[i]);
      }
      out.offsets.push_back(row);
    }
  }
  return out;
}

}  // namespace cdseg::geometry
