#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "cdseg/autograd/graph.hpp"
#include "cdseg/geometry/serialize.hpp"

namespace cdseg::oracle {

/// Per-class IoU from explicit index sets; classes absent from both gt and
/// pred are reported as -1.
inline std::vector<double> brute_iou(const std::vector<int>& gt, const std::vector<int>& pred, int k) {
  std::vector<double> out;
  for (int c = 0; c < k; ++c) {
    std::set<std::size_t> g, p;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] < 0) continue;
      if (gt[i] == c) g.insert(i);
      if (pred[i] == c) p.insert(i);
    }
    std::vector<std::size_t> inter, uni;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(inter));
    std::set_union(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(uni));
    out.push_back(uni.empty() ? -1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size()));
  }
  return out;
}

/// Lovasz extension of the Jaccard set loss evaluated as the integral over
/// thresholds of F({i : err_i >= theta}), with F(M) = |M| / |G u M|.
inline double brute_lovasz(const std::vector<double>& err, const std::vector<int>& fg) {
  auto F = [&](double theta) {
    std::size_t m = 0, uni = 0;
    for (std::size_t i = 0; i < err.size(); ++i) {
      const bool in_m = err[i] >= theta;
      m += in_m;
      uni += in_m || fg[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(uni);
  };
  std::vector<double> v(err.begin(), err.end());
  v.push_back(0.0);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  double total = 0;
  for (std::size_t i = 1; i < v.size(); ++i) total += (v[i] - v[i - 1]) * F(v[i]);
  return total;
}

/// Lovasz-softmax by brute force: softmax, then the mean over classes present
/// in gt of brute_lovasz on |onehot - p|.
inline double brute_lovasz_softmax(const std::vector<std::vector<double>>& logits, const std::vector<int>& gt) {
  const std::size_t k = logits.front().size();
  std::vector<std::vector<double>> p;
  for (const auto& r : logits) {
    double mx = *std::max_element(r.begin(), r.end()), z = 0;
    std::vector<double> e;
    for (double v : r) z += std::exp(v - mx);
    for (double v : r) e.push_back(std::exp(v - mx) / z);
    p.push_back(e);
  }
  double sum = 0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> err;
    std::vector<int> fg;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] < 0) continue;
      fg.push_back(gt[i] == static_cast<int>(c));
      err.push_back(fg.back() ? 1 - p[i][c] : p[i][c]);
    }
    if (std::find(fg.begin(), fg.end(), 1) == fg.end()) continue;
    sum += brute_lovasz(err, fg);
    ++present;
  }
  return present ? sum / present : 0.0;
}

/// Mean Euclidean distance between cells adjacent in serialized order.
inline double mean_step_distance(const std::vector<geometry::GridCoord>& cells, geometry::CurveOrder order) {
  if (cells.size() < 2) return 0.0;
  const auto s = geometry::serialize_grid(cells, {cells.size()}, order);
  double total = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const auto& a = cells[s.permutation[i - 1]];
    const auto& b = cells[s.permutation[i]];
    double d2 = 0;
    for (std::size_t d = 0; d < 3; ++d) d2 += static_cast<double>((a[d] - b[d]) * (a[d] - b[d]));
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(cells.size() - 1);
}

struct GradCheck {
  std::size_t checked = 0, failed = 0;
  double worst_rel = 0;
  std::string worst_name;
};

/// Central finite differences on every scalar of `params` against the
/// analytic gradient of `loss`. A scalar passes if the relative error is at
/// most `rel` or the absolute error at most `abs`.
inline GradCheck check_gradients(const std::function<autograd::Var(autograd::Graph<double>&)>& loss,
                                 std::vector<autograd::Parameter<double>*> params, double h = 1e-6,
                                 double rel = 1e-4, double abs = 1e-6) {
  for (auto* p : params) p->grad = Matrix<double>(p->value.rows(), p->value.cols());
  {
    autograd::Graph<double> g;
    g.backward(loss(g));
  }
  auto value = [&] {
    autograd::Graph<double> g(false);
    return g.value(loss(g))[0];
  };
  GradCheck r;
  for (auto* p : params)
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double x = p->value[k];
      p->value[k] = x + h;
      const double up = value();
      p->value[k] = x - h;
      const double down = value();
      p->value[k] = x;
      const double num = (up - down) / (2 * h);
      const double ana = p->grad[k];
      const double err = std::abs(num - ana);
      const double scale = std::max(std::abs(num), std::abs(ana));
      const double relerr = scale > 0 ? err / scale : 0.0;
      ++r.checked;
      if (err > abs && relerr > rel) {
        ++r.failed;
        if (relerr > r.worst_rel) {
          r.worst_rel = relerr;
          r.worst_name = p->name + "[" + std::to_string(k) + "]";
        }
      }
    }
  return r;
}

}  // namespace cdseg::oracle
