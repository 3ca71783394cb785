#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/geometry/point_cloud.hpp"

namespace cdseg::geometry {

enum class CurveOrder { z, trans_z, hilbert, trans_hilbert };

inline constexpr std::array<CurveOrder, 4> kAllOrders = {CurveOrder::z, CurveOrder::trans_z, CurveOrder::hilbert,
                                                         CurveOrder::trans_hilbert};

inline const char* to_string(CurveOrder o) {
  switch (o) {
    case CurveOrder::z: return "z";
    case CurveOrder::trans_z: return "trans_z";
    case CurveOrder::hilbert: return "hilbert";
    case CurveOrder::trans_hilbert: return "trans_hilbert";
  }
  return "?";
}

inline constexpr int kCurveBits = 21;
inline constexpr std::int64_t kCurveMaxCoord = (std::int64_t{1} << kCurveBits) - 1;

using GridCoord = std::array<std::int64_t, 3>;

namespace detail {

inline std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffff;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

/// Morton key with `a` in the lowest bit of each triple.
inline std::uint64_t morton(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return spread_bits(a) | (spread_bits(b) << 1) | (spread_bits(c) << 2);
}

/// Skilling's axes-to-transpose Hilbert transform, then bit interleave with
/// the first axis most significant in each triple.
inline std::uint64_t hilbert(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::array<std::uint64_t, 3> x{a, b, c};
  const std::uint64_t m = std::uint64_t{1} << (kCurveBits - 1);
  for (std::uint64_t q = m; q > 1; q >>= 1) {
    const std::uint64_t p = q - 1;
    for (std::size_t i = 0; i < 3; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint64_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  for (std::size_t i = 1; i < 3; ++i) x[i] ^= x[i - 1];
  std::uint64_t t = 0;
  for (std::uint64_t q = m; q > 1; q >>= 1)
    if (x[2] & q) t ^= q - 1;
  for (auto& v : x) v ^= t;
  std::uint64_t key = 0;
  for (int bit = kCurveBits - 1; bit >= 0; --bit)
    for (std::size_t i = 0; i < 3; ++i) key = (key << 1) | ((x[i] >> bit) & 1U);
  return key;
}

}  // namespace detail

/// Curve key of one non-negative grid coordinate. Trans- orders use the
/// rotated axis sequence (y, z, x).
inline std::uint64_t curve_key(const GridCoord& g, CurveOrder order) {
  for (auto v : g)
    if (v < 0 || v > kCurveMaxCoord)
      throw ResolutionError("grid coordinate " + std::to_string(v) + " exceeds the " + std::to_string(kCurveBits) +
                            "-bit curve range; use a coarser grid");
  const auto x = static_cast<std::uint64_t>(g[0]);
  const auto y = static_cast<std::uint64_t>(g[1]);
  const auto z = static_cast<std::uint64_t>(g[2]);
  switch (order) {
    case CurveOrder::z: return detail::morton(x, y, z);
    case CurveOrder::trans_z: return detail::morton(y, z, x);
    case CurveOrder::hilbert: return detail::hilbert(x, y, z);
    case CurveOrder::trans_hilbert: return detail::hilbert(y, z, x);
  }
  return 0;
}

struct SerializedOrder {
  CurveOrder order = CurveOrder::z;
  std::vector<std::uint32_t> permutation;  // sorted position -> row
  std::vector<std::uint64_t> codes;        // key per row
};

/// Stable sort of rows by (batch element, key).
inline SerializedOrder serialize_grid(const std::vector<GridCoord>& coords, const std::vector<std::size_t>& offsets,
                                      CurveOrder order) {
  SerializedOrder s;
  s.order = order;
  s.codes.resize(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) s.codes[i] = curve_key(coords[i], order);
  s.permutation.resize(coords.size());
  std::iota(s.permutation.begin(), s.permutation.end(), 0U);
  std::size_t lo = 0;
  for (std::size_t hi : offsets) {
    std::stable_sort(s.permutation.begin() + static_cast<std::ptrdiff_t>(lo),
                     s.permutation.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::uint32_t a, std::uint32_t b) { return s.codes[a] < s.codes[b]; });
    lo = hi;
  }
  return s;
}

/// Quantizes positions to cells of size `grid` relative to each batch
/// element's minimum corner.
inline std::vector<GridCoord> quantize(const PointCloud& cloud, double grid) {
  if (!(grid > 0.0)) throw ArgumentError("quantize: grid must be > 0");
  std::vector<GridCoord> out(cloud.size());
  for (std::size_t b = 0; b < cloud.batch_size(); ++b) {
    std::array<double, 3> lo{1e300, 1e300, 1e300};
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i)
      for (std::size_t d = 0; d < 3; ++d) lo[d] = std::min(lo[d], cloud.positions(i, d));
    for (std::size_t i = cloud.begin_of(b); i < cloud.end_of(b); ++i)
      for (std::size_t d = 0; d < 3; ++d) {
        const double q = std::floor((cloud.positions(i, d) - lo[d]) / grid);
        if (q > static_cast<double>(kCurveMaxCoord))
          throw ResolutionError("serialize: grid " + std::to_string(grid) +
                                " is too fine for 21-bit curve keys; use a coarser grid");
        out[i][d] = static_cast<std::int64_t>(q);
      }
  }
  return out;
}

inline SerializedOrder serialize(const PointCloud& cloud, CurveOrder order, double grid) {
  return serialize_grid(quantize(cloud, grid), cloud.offsets, order);
}

}  // namespace cdseg::geometry
