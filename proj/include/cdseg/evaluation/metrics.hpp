#pragma once

#include <cstdint>
#include <vector>

#include "cdseg/core/error.hpp"

namespace cdseg::evaluation {

/// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k = 0) : k_(k), counts_(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {
    if (k < 0) throw ArgumentError("ConfusionMatrix: K must be >= 0");
  }

  int classes() const noexcept { return k_; }
  std::uint64_t operator()(int gt, int pred) const { return counts_[index(gt, pred)]; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  /// Adds labeled points (gt != -1); other gt or pred values are errors.
  ConfusionMatrix& accumulate(const std::vector<int>& gt, const std::vector<int>& pred) {
    if (gt.size() != pred.size()) throw ShapeError("accumulate: gt and pred lengths differ");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == -1) continue;
      ++counts_[index(gt[i], pred[i])];
    }
    return *this;
  }

  ConfusionMatrix& merge(const ConfusionMatrix& o) {
    if (o.k_ != k_) throw ShapeError("merge: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int gt, int pred) const {
    if (gt < 0 || gt >= k_ || pred < 0 || pred >= k_)
      throw IndexError("ConfusionMatrix: label pair (" + std::to_string(gt) + ", " + std::to_string(pred) +
                       ") outside [0, " + std::to_string(k_) + ")");
    return static_cast<std::size_t>(gt) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(pred);
  }

  int k_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix accumulate(ConfusionMatrix cm, const std::vector<int>& gt, const std::vector<int>& pred) {
  cm.accumulate(gt, pred);
  return cm;
}

struct MetricsReport {
  double miou = 0, macc = 0, allacc = 0;
  std::vector<double> per_class_iou;  // -1 for classes absent from gt and pred
  ConfusionMatrix counts;
};

/// allAcc = trace / total; mAcc over classes with gt points; mIoU over
/// classes present in gt or pred.
inline MetricsReport metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.counts = cm;
  const int k = cm.classes();
  std::vector<std::uint64_t> row(k, 0), col(k, 0);
  std::uint64_t diag = 0;
  for (int g = 0; g < k; ++g)
    for (int p = 0; p < k; ++p) {
      row[g] += cm(g, p);
      col[p] += cm(g, p);
      if (g == p) diag += cm(g, p);
    }
  const auto total = cm.total();
  r.allacc = total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  double iou_sum = 0, acc_sum = 0;
  int iou_n = 0, acc_n = 0;
  r.per_class_iou.assign(k, -1.0);
  for (int c = 0; c < k; ++c) {
    const auto tp = cm(c, c);
    if (row[c] > 0) {
      acc_sum += static_cast<double>(tp) / static_cast<double>(row[c]);
      ++acc_n;
    }
    const auto uni = row[c] + col[c] - tp;
    if (uni > 0) {
      r.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
      iou_sum += r.per_class_iou[c];
      ++iou_n;
    }
  }
  r.miou = iou_n ? iou_sum / iou_n : 0.0;
  r.macc = acc_n ? acc_sum / acc_n : 0.0;
  return r;
}

}  // namespace cdseg::evaluation
