#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <spdlog/spdlog.h>

#include "cdseg/autograd/ops.hpp"

namespace cdseg::training {

using autograd::Graph;
using autograd::Var;

/// Mean squared error against a constant target, as a 1x1 node.
template <class T>
Var mse_loss(Graph<T>& g, Var pred, const Matrix<T>& target) {
  const auto& P = g.value(pred);
  require_same_shape(P, target, "mse_loss");
  const std::size_t n = P.size();
  if (n == 0) return g.constant(Matrix<T>(1, 1));
  T s = 0;
  for (std::size_t k = 0; k < n; ++k) s += (P[k] - target[k]) * (P[k] - target[k]);
  return g.push(Matrix<T>(1, 1, s / static_cast<T>(n)), g.any_requires_grad({pred}),
                [&g, pred, target, n, out = g.size()] {
                  const T dy = g.grad(Var{out})[0] * T(2) / static_cast<T>(n);
                  const auto& P = g.value(pred);
                  auto& d = g.grad(pred);
                  for (std::size_t k = 0; k < n; ++k) d[k] += dy * (P[k] - target[k]);
                });
}

/// Noise-prediction loss L(theta): MSE between predicted and drawn noise.
template <class T>
Var noise_loss(Graph<T>& g, Var eps_pred, const Matrix<T>& eps_true) {
  return mse_loss(g, eps_pred, eps_true);
}

/// Baseline NN loss: MSE between the NN output and its clean input.
template <class T>
Var baseline_nn_loss(Graph<T>& g, Var nn_output, const Matrix<T>& clean_input) {
  return mse_loss(g, nn_output, clean_input);
}

namespace detail {

template <class T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T z = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += (p(i, c) = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < logits.cols(); ++c) p(i, c) /= z;
  }
  return p;
}

inline void check_labels(std::size_t rows, std::size_t k, const std::vector<int>& labels, const char* what) {
  if (labels.size() != rows) throw ShapeError(std::string(what) + ": one label per row required");
  for (int l : labels)
    if (l < -1 || l >= static_cast<int>(k)) throw IndexError(std::string(what) + ": label " + std::to_string(l) + " out of range");
}

}  // namespace detail

/// Mean cross-entropy over labeled rows (label -1 rows are ignored).
template <class T>
Var ce_loss(Graph<T>& g, Var logits, const std::vector<int>& labels) {
  const auto& L = g.value(logits);
  detail::check_labels(L.rows(), L.cols(), labels, "ce_loss");
  Matrix<T> p = detail::softmax_rows(L);
  std::size_t n = 0;
  T s = 0;
  for (std::size_t i = 0; i < L.rows(); ++i) {
    if (labels[i] < 0) continue;
    ++n;
    const auto row = L.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T z = 0;
    for (T v : row) z += std::exp(v - mx);
    s += std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  if (n == 0) return g.constant(Matrix<T>(1, 1));
  return g.push(Matrix<T>(1, 1, s / static_cast<T>(n)), g.any_requires_grad({logits}),
                [&g, logits, labels, p = std::move(p), n, out = g.size()] {
                  const T dy = g.grad(Var{out})[0] / static_cast<T>(n);
                  auto& d = g.grad(logits);
                  for (std::size_t i = 0; i < p.rows(); ++i) {
                    if (labels[i] < 0) continue;
                    for (std::size_t c = 0; c < p.cols(); ++c)
                      d(i, c) += dy * (p(i, c) - (static_cast<int>(c) == labels[i] ? T(1) : T(0)));
                  }
                });
}

/// Gradient of the Lovasz extension of the Jaccard loss with respect to
/// sorted errors, given the ground-truth indicator in that sorted order.
template <class T>
std::vector<T> lovasz_grad(const std::vector<int>& gt_sorted) {
  const std::size_t p = gt_sorted.size();
  std::vector<T> jac(p);
  const T gts = static_cast<T>(std::accumulate(gt_sorted.begin(), gt_sorted.end(), 0));
  T cum_gt = 0, cum_neg = 0;
  for (std::size_t i = 0; i < p; ++i) {
    cum_gt += static_cast<T>(gt_sorted[i]);
    cum_neg += static_cast<T>(1 - gt_sorted[i]);
    jac[i] = T(1) - (gts - cum_gt) / (gts + cum_neg);
  }
  for (std::size_t i = p; i-- > 1;) jac[i] -= jac[i - 1];
  return jac;
}

/// Lovasz-softmax loss averaged over classes present in the labels.
template <class T>
Var lovasz_softmax_loss(Graph<T>& g, Var logits, const std::vector<int>& labels) {
  const auto& L = g.value(logits);
  detail::check_labels(L.rows(), L.cols(), labels, "lovasz_softmax_loss");
  const std::size_t k = L.cols();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) rows.push_back(i);
  if (rows.empty()) {
    spdlog::warn("lovasz_softmax_loss: no labeled points, loss defined as 0");
    return g.constant(Matrix<T>(1, 1));
  }
  std::vector<bool> present(k, false);
  for (std::size_t i : rows) present[static_cast<std::size_t>(labels[i])] = true;
  const auto classes = static_cast<std::size_t>(std::count(present.begin(), present.end(), true));

  Matrix<T> p = detail::softmax_rows(L);
  // dloss/dp for every (row, class)
  Matrix<T> dp(L.rows(), k);
  T total = 0;
  std::vector<T> err(rows.size());
  std::vector<std::size_t> idx(rows.size());
  std::vector<int> gt(rows.size());
  for (std::size_t c = 0; c < k; ++c) {
    if (!present[c]) continue;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const bool fg = labels[rows[j]] == static_cast<int>(c);
      err[j] = fg ? T(1) - p(rows[j], c) : p(rows[j], c);
    }
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    for (std::size_t j = 0; j < idx.size(); ++j) gt[j] = labels[rows[idx[j]]] == static_cast<int>(c) ? 1 : 0;
    const auto w = lovasz_grad<T>(gt);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      total += err[idx[j]] * w[j];
      const std::size_t r = rows[idx[j]];
      dp(r, c) += (gt[j] ? -w[j] : w[j]) / static_cast<T>(classes);
    }
  }
  return g.push(Matrix<T>(1, 1, total / static_cast<T>(classes)), g.any_requires_grad({logits}),
                [&g, logits, p = std::move(p), dp = std::move(dp), out = g.size()] {
                  const T dy = g.grad(Var{out})[0];
                  auto& d = g.grad(logits);
                  for (std::size_t i = 0; i < p.rows(); ++i) {
                    T dot = 0;
                    for (std::size_t c = 0; c < p.cols(); ++c) dot += dp(i, c) * p(i, c);
                    for (std::size_t c = 0; c < p.cols(); ++c) d(i, c) += dy * p(i, c) * (dp(i, c) - dot);
                  }
                });
}

/// L(psi) = CE + lambda * Lovasz.
template <class T>
Var segmentation_loss(Graph<T>& g, Var logits, const std::vector<int>& labels, T lambda) {
  Var ce = ce_loss(g, logits, labels);
  if (lambda == T(0)) return ce;
  return autograd::add(g, ce, autograd::scale(g, lovasz_softmax_loss(g, logits, labels), lambda));
}

// Value-only conveniences.

template <class T>
T ce_loss(const Matrix<T>& logits, const std::vector<int>& labels) {
  Graph<T> g(false);
  return g.value(ce_loss(g, g.constant(logits), labels))[0];
}

template <class T>
T lovasz_softmax_loss(const Matrix<T>& logits, const std::vector<int>& labels) {
  Graph<T> g(false);
  return g.value(lovasz_softmax_loss(g, g.constant(logits), labels))[0];
}

template <class T>
T mse(const Matrix<T>& a, const Matrix<T>& b) {
  Graph<T> g(false);
  return g.value(mse_loss(g, g.constant(a), b))[0];
}

}  // namespace cdseg::training
