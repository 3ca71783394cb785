#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cdseg/autograd/graph.hpp"

namespace cdseg::autograd {

template <class T>
Var matmul(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.cols() != B.rows())
    throw ShapeError("matmul: " + shape_string(A.rows(), A.cols()) + " x " + shape_string(B.rows(), B.cols()));
  Matrix<T> C(A.rows(), B.cols());
  if (A.rows() > 0) as_eigen(C).noalias() = as_eigen(A) * as_eigen(B);
  return g.push(std::move(C), g.any_requires_grad({a, b}), [&g, a, b, out = g.size()] {
    const Var o{out};
    const auto& dC = g.grad(o);
    if (g.requires_grad(a)) as_eigen(g.grad(a)).noalias() += as_eigen(dC) * as_eigen(g.value(b)).transpose();
    if (g.requires_grad(b)) as_eigen(g.grad(b)).noalias() += as_eigen(g.value(a)).transpose() * as_eigen(dC);
  });
}

/// x + broadcast row vector (1 x C).
template <class T>
Var add_row(Graph<T>& g, Var x, Var row) {
  const auto& X = g.value(x);
  const auto& R = g.value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) throw ShapeError("add_row: row must be 1 x " + std::to_string(X.cols()));
  Matrix<T> Y = X;
  for (std::size_t i = 0; i < Y.rows(); ++i)
    for (std::size_t c = 0; c < Y.cols(); ++c) Y(i, c) += R[c];
  return g.push(std::move(Y), g.any_requires_grad({x, row}), [&g, x, row, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    if (g.requires_grad(x)) {
      auto& dX = g.grad(x);
      for (std::size_t k = 0; k < dY.size(); ++k) dX[k] += dY[k];
    }
    if (g.requires_grad(row)) {
      auto& dR = g.grad(row);
      for (std::size_t i = 0; i < dY.rows(); ++i)
        for (std::size_t c = 0; c < dY.cols(); ++c) dR[c] += dY(i, c);
    }
  });
}

/// x W (+ b) with W stored in_features x out_features.
template <class T>
Var linear(Graph<T>& g, Var x, Var w, Var b = {}) {
  Var y = matmul(g, x, w);
  return b.valid() ? add_row(g, y, b) : y;
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Matrix<T> Y = g.value(a);
  const auto& B = g.value(b);
  for (std::size_t k = 0; k < Y.size(); ++k) Y[k] += B[k];
  return g.push(std::move(Y), g.any_requires_grad({a, b}), [&g, a, b, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    for (Var v : {a, b})
      if (g.requires_grad(v)) {
        auto& d = g.grad(v);
        for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k];
      }
  });
}

template <class T>
Var sub(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  Matrix<T> Y = g.value(a);
  const auto& B = g.value(b);
  for (std::size_t k = 0; k < Y.size(); ++k) Y[k] -= B[k];
  return g.push(std::move(Y), g.any_requires_grad({a, b}), [&g, a, b, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    if (g.requires_grad(a)) {
      auto& d = g.grad(a);
      for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k];
    }
    if (g.requires_grad(b)) {
      auto& d = g.grad(b);
      for (std::size_t k = 0; k < dY.size(); ++k) d[k] -= dY[k];
    }
  });
}

/// Elementwise product.
template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  Matrix<T> Y = g.value(a);
  const auto& B = g.value(b);
  for (std::size_t k = 0; k < Y.size(); ++k) Y[k] *= B[k];
  return g.push(std::move(Y), g.any_requires_grad({a, b}), [&g, a, b, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    if (g.requires_grad(a)) {
      auto& d = g.grad(a);
      const auto& B = g.value(b);
      for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k] * B[k];
    }
    if (g.requires_grad(b)) {
      auto& d = g.grad(b);
      const auto& A = g.value(a);
      for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k] * A[k];
    }
  });
}

template <class T>
Var scale(Graph<T>& g, Var a, T s) {
  Matrix<T> Y = g.value(a);
  for (auto& v : Y.flat()) v *= s;
  return g.push(std::move(Y), g.any_requires_grad({a}), [&g, a, s, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& d = g.grad(a);
    for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k] * s;
  });
}

/// Multiplies row i by the constant scales[i].
template <class T>
Var row_scale(Graph<T>& g, Var a, std::vector<T> scales) {
  const auto& A = g.value(a);
  if (scales.size() != A.rows()) throw ShapeError("row_scale: one scale per row required");
  Matrix<T> Y = A;
  for (std::size_t i = 0; i < Y.rows(); ++i)
    for (auto& v : Y.row(i)) v *= scales[i];
  return g.push(std::move(Y), g.any_requires_grad({a}), [&g, a, s = std::move(scales), out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& d = g.grad(a);
    for (std::size_t i = 0; i < dY.rows(); ++i)
      for (std::size_t c = 0; c < dY.cols(); ++c) d(i, c) += dY(i, c) * s[i];
  });
}

template <class T>
Var detach(Graph<T>& g, Var a) {
  return g.constant(g.value(a));
}

/// Exact (erf) GELU.
template <class T>
Var gelu(Graph<T>& g, Var x) {
  Matrix<T> Y = g.value(x);
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (auto& v : Y.flat()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return g.push(std::move(Y), g.any_requires_grad({x}), [&g, x, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    const auto& X = g.value(x);
    auto& d = g.grad(x);
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t k = 0; k < dY.size(); ++k) {
      const T v = X[k];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      d[k] += dY[k] * (cdf + v * pdf);
    }
  });
}

/// Row-wise layer normalization with affine gamma/beta (1 x C each).
template <class T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
  const auto& X = g.value(x);
  const std::size_t n = X.rows(), c = X.cols();
  Matrix<T> xhat(n, c);
  std::vector<T> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = X.row(i);
    T mean = 0;
    for (T v : r) mean += v;
    mean /= static_cast<T>(c);
    T var = 0;
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t k = 0; k < c; ++k) xhat(i, k) = (r[k] - mean) * inv_std[i];
  }
  const auto& G = g.value(gamma);
  const auto& B = g.value(beta);
  Matrix<T> Y(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) Y(i, k) = xhat(i, k) * G[k] + B[k];
  return g.push(std::move(Y), g.any_requires_grad({x, gamma, beta}),
                [&g, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), out = g.size()] {
                  const auto& dY = g.grad(Var{out});
                  const std::size_t n = dY.rows(), c = dY.cols();
                  const auto& G = g.value(gamma);
                  if (g.requires_grad(gamma) || g.requires_grad(beta)) {
                    auto& dG = g.grad(gamma);
                    auto& dB = g.grad(beta);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t k = 0; k < c; ++k) {
                        dG[k] += dY(i, k) * xhat(i, k);
                        dB[k] += dY(i, k);
                      }
                  }
                  if (g.requires_grad(x)) {
                    auto& dX = g.grad(x);
                    for (std::size_t i = 0; i < n; ++i) {
                      T s1 = 0, s2 = 0;
                      for (std::size_t k = 0; k < c; ++k) {
                        const T dxh = dY(i, k) * G[k];
                        s1 += dxh;
                        s2 += dxh * xhat(i, k);
                      }
                      const T inv_c = T(1) / static_cast<T>(c);
                      for (std::size_t k = 0; k < c; ++k) {
                        const T dxh = dY(i, k) * G[k];
                        dX(i, k) += inv_std[i] * (dxh - inv_c * s1 - xhat(i, k) * inv_c * s2);
                      }
                    }
                  }
                });
}

/// out[i] = x[index[i]]; the backward pass scatter-adds.
template <class T>
Var gather_rows(Graph<T>& g, Var x, std::vector<std::uint32_t> index) {
  const auto& X = g.value(x);
  Matrix<T> Y(index.size(), X.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows()) throw ShapeError("gather_rows: index out of range");
    auto src = X.row(index[i]);
    std::copy(src.begin(), src.end(), Y.row(i).begin());
  }
  return g.push(std::move(Y), g.any_requires_grad({x}), [&g, x, idx = std::move(index), out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& dX = g.grad(x);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = dY.row(i);
      auto dst = dX.row(idx[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

/// Per-segment max over rows; parent[i] in [0, segments). Every segment must
/// be non-empty.
template <class T>
Var segment_max(Graph<T>& g, Var x, const std::vector<std::uint32_t>& parent, std::size_t segments) {
  const auto& X = g.value(x);
  if (parent.size() != X.rows()) throw ShapeError("segment_max: parent size does not match rows");
  const std::size_t c = X.cols();
  Matrix<T> Y(segments, c, std::numeric_limits<T>::lowest());
  std::vector<std::uint32_t> arg(segments * c, std::numeric_limits<std::uint32_t>::max());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const std::size_t p = parent[i];
    if (p >= segments) throw ShapeError("segment_max: parent out of range");
    for (std::size_t k = 0; k < c; ++k)
      if (X(i, k) > Y(p, k)) {
        Y(p, k) = X(i, k);
        arg[p * c + k] = static_cast<std::uint32_t>(i);
      }
  }
  for (auto a : arg)
    if (a == std::numeric_limits<std::uint32_t>::max()) throw ShapeError("segment_max: empty segment");
  return g.push(std::move(Y), g.any_requires_grad({x}), [&g, x, arg = std::move(arg), c, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& dX = g.grad(x);
    for (std::size_t m = 0; m < dY.rows(); ++m)
      for (std::size_t k = 0; k < c; ++k) dX(arg[m * c + k], k) += dY(m, k);
  });
}

template <class T>
Var segment_mean(Graph<T>& g, Var x, const std::vector<std::uint32_t>& parent, std::size_t segments) {
  const auto& X = g.value(x);
  if (parent.size() != X.rows()) throw ShapeError("segment_mean: parent size does not match rows");
  const std::size_t c = X.cols();
  Matrix<T> Y(segments, c);
  std::vector<T> count(segments, T(0));
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (parent[i] >= segments) throw ShapeError("segment_mean: parent out of range");
    count[parent[i]] += T(1);
    for (std::size_t k = 0; k < c; ++k) Y(parent[i], k) += X(i, k);
  }
  for (std::size_t m = 0; m < segments; ++m) {
    if (count[m] == T(0)) throw ShapeError("segment_mean: empty segment");
    for (auto& v : Y.row(m)) v /= count[m];
  }
  return g.push(std::move(Y), g.any_requires_grad({x}), [&g, x, parent, count = std::move(count), out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& dX = g.grad(x);
    for (std::size_t i = 0; i < parent.size(); ++i)
      for (std::size_t k = 0; k < dY.cols(); ++k) dX(i, k) += dY(parent[i], k) / count[parent[i]];
  });
}

template <class T>
Var concat_cols(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.rows() != B.rows()) throw ShapeError("concat_cols: row counts differ");
  const std::size_t ca = A.cols(), cb = B.cols();
  Matrix<T> Y(A.rows(), ca + cb);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::copy(A.row(i).begin(), A.row(i).end(), Y.row(i).begin());
    std::copy(B.row(i).begin(), B.row(i).end(), Y.row(i).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return g.push(std::move(Y), g.any_requires_grad({a, b}), [&g, a, b, ca, cb, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    if (g.requires_grad(a)) {
      auto& d = g.grad(a);
      for (std::size_t i = 0; i < dY.rows(); ++i)
        for (std::size_t k = 0; k < ca; ++k) d(i, k) += dY(i, k);
    }
    if (g.requires_grad(b)) {
      auto& d = g.grad(b);
      for (std::size_t i = 0; i < dY.rows(); ++i)
        for (std::size_t k = 0; k < cb; ++k) d(i, k) += dY(i, ca + k);
    }
  });
}

/// Index lists of an attention problem: group j attends queries
/// q_index[q_offsets[j]..q_offsets[j+1]) to keys k_index[k_offsets[j]..).
/// Every query row belongs to at most one group.
struct AttentionGroups {
  std::vector<std::uint32_t> q_index, q_offsets{0};
  std::vector<std::uint32_t> k_index, k_offsets{0};

  std::size_t count() const noexcept { return q_offsets.size() - 1; }

  void add(const std::vector<std::uint32_t>& q, const std::vector<std::uint32_t>& k) {
    q_index.insert(q_index.end(), q.begin(), q.end());
    k_index.insert(k_index.end(), k.begin(), k.end());
    q_offsets.push_back(static_cast<std::uint32_t>(q_index.size()));
    k_offsets.push_back(static_cast<std::uint32_t>(k_index.size()));
  }
};

/// Records the largest |row sum - 1| of every attention matrix produced.
struct AttentionProbe {
  double max_rowsum_error = 0.0;
  std::size_t calls = 0;
};

/// Multi-head scaled dot-product attention within groups. q is Nq x C, k and
/// v are Nk x C; the softmax scale is 1/sqrt(C / heads).
template <class T>
Var grouped_attention(Graph<T>& g, Var q, Var k, Var v, int heads, const AttentionGroups& groups,
                      AttentionProbe* probe = nullptr) {
  using Mat = EigenRowMat<T>;
  const auto& Q = g.value(q);
  const auto& K = g.value(k);
  const auto& V = g.value(v);
  const std::size_t c = Q.cols();
  if (K.cols() != c || V.cols() != c || K.rows() != V.rows()) throw ShapeError("attention: q/k/v widths differ");
  if (heads <= 0 || c % static_cast<std::size_t>(heads) != 0)
    throw ConfigError("heads", "channels " + std::to_string(c) + " not divisible by heads " + std::to_string(heads));
  const auto d = static_cast<Eigen::Index>(c / static_cast<std::size_t>(heads));
  const T sc = T(1) / std::sqrt(static_cast<T>(d));
  Matrix<T> O(Q.rows(), c);
  std::vector<Mat> probs;  // per group, per head
  probs.reserve(groups.count() * static_cast<std::size_t>(heads));
  auto gather = [](const Matrix<T>& M, const std::uint32_t* idx, std::size_t n) {
    Mat out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M.cols()));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t col = 0; col < M.cols(); ++col) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = M(idx[i], col);
    return out;
  };
  for (std::size_t gi = 0; gi < groups.count(); ++gi) {
    const std::uint32_t* qi = groups.q_index.data() + groups.q_offsets[gi];
    const std::uint32_t* ki = groups.k_index.data() + groups.k_offsets[gi];
    const std::size_t nq = groups.q_offsets[gi + 1] - groups.q_offsets[gi];
    const std::size_t nk = groups.k_offsets[gi + 1] - groups.k_offsets[gi];
    if (nk == 0) throw ShapeError("attention: group without keys");
    Mat Qg = gather(Q, qi, nq), Kg = gather(K, ki, nk), Vg = gather(V, ki, nk);
    for (int h = 0; h < heads; ++h) {
      Mat S = (Qg.middleCols(h * d, d) * Kg.middleCols(h * d, d).transpose()) * sc;
      for (Eigen::Index r = 0; r < S.rows(); ++r) {
        const T mx = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - mx).exp();
        S.row(r) /= S.row(r).sum();
      }
      if (probe) {
        for (Eigen::Index r = 0; r < S.rows(); ++r)
          probe->max_rowsum_error = std::max(probe->max_rowsum_error, std::abs(static_cast<double>(S.row(r).sum()) - 1.0));
      }
      Mat Og = S * Vg.middleCols(h * d, d);
      for (std::size_t i = 0; i < nq; ++i)
        for (Eigen::Index col = 0; col < d; ++col) O(qi[i], static_cast<std::size_t>(h * d + col)) = Og(static_cast<Eigen::Index>(i), col);
      probs.push_back(std::move(S));
    }
  }
  if (probe) ++probe->calls;
  const bool rg = g.any_requires_grad({q, k, v});
  if (!rg) probs.clear();
  return g.push(std::move(O), rg, [&g, q, k, v, heads, d, sc, groups, probs = std::move(probs), gather, out = g.size()] {
    const auto& dO = g.grad(Var{out});
    const auto& Q = g.value(q);
    const auto& K = g.value(k);
    const auto& V = g.value(v);
    const bool gq = g.requires_grad(q), gk = g.requires_grad(k), gv = g.requires_grad(v);
    Matrix<T>* dQ = gq ? &g.grad(q) : nullptr;
    Matrix<T>* dK = gk ? &g.grad(k) : nullptr;
    Matrix<T>* dV = gv ? &g.grad(v) : nullptr;
    std::size_t pi = 0;
    for (std::size_t gi = 0; gi < groups.count(); ++gi) {
      const std::uint32_t* qi = groups.q_index.data() + groups.q_offsets[gi];
      const std::uint32_t* ki = groups.k_index.data() + groups.k_offsets[gi];
      const std::size_t nq = groups.q_offsets[gi + 1] - groups.q_offsets[gi];
      const std::size_t nk = groups.k_offsets[gi + 1] - groups.k_offsets[gi];
      Mat Qg = gather(Q, qi, nq), Kg = gather(K, ki, nk), Vg = gather(V, ki, nk), dOg = gather(dO, qi, nq);
      Mat dQg = Mat::Zero(Qg.rows(), Qg.cols()), dKg = Mat::Zero(Kg.rows(), Kg.cols()), dVg = Mat::Zero(Vg.rows(), Vg.cols());
      for (int h = 0; h < heads; ++h, ++pi) {
        const Mat& P = probs[pi];
        auto dOh = dOg.middleCols(h * d, d);
        dVg.middleCols(h * d, d).noalias() += P.transpose() * dOh;
        Mat dP = dOh * Vg.middleCols(h * d, d).transpose();
        Mat dS = P.array() * (dP.array().colwise() - (dP.array() * P.array()).rowwise().sum());
        dQg.middleCols(h * d, d).noalias() += (dS * Kg.middleCols(h * d, d)) * sc;
        dKg.middleCols(h * d, d).noalias() += (dS.transpose() * Qg.middleCols(h * d, d)) * sc;
      }
      const std::size_t c = Q.cols();
      for (std::size_t i = 0; i < nq; ++i)
        if (dQ)
          for (std::size_t col = 0; col < c; ++col) (*dQ)(qi[i], col) += dQg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
      for (std::size_t i = 0; i < nk; ++i)
        for (std::size_t col = 0; col < c; ++col) {
          if (dK) (*dK)(ki[i], col) += dKg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
          if (dV) (*dV)(ki[i], col) += dVg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
        }
    }
  });
}

// Scalar (1x1) helpers for loss composition.

template <class T>
Var sqrt_op(Graph<T>& g, Var a) {
  Matrix<T> Y = g.value(a);
  for (auto& v : Y.flat()) v = std::sqrt(v);
  Matrix<T> y = Y;
  return g.push(std::move(Y), g.any_requires_grad({a}), [&g, a, y = std::move(y), out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& d = g.grad(a);
    for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k] * T(0.5) / y[k];
  });
}

template <class T>
Var exp_op(Graph<T>& g, Var a) {
  Matrix<T> Y = g.value(a);
  for (auto& v : Y.flat()) v = std::exp(v);
  Matrix<T> y = Y;
  return g.push(std::move(Y), g.any_requires_grad({a}), [&g, a, y = std::move(y), out = g.size()] {
    const auto& dY = g.grad(Var{out});
    auto& d = g.grad(a);
    for (std::size_t k = 0; k < dY.size(); ++k) d[k] += dY[k] * y[k];
  });
}

/// max(a, lo); the gradient is zero where the clamp is active.
template <class T>
Var clamp_min(Graph<T>& g, Var a, T lo) {
  Matrix<T> Y = g.value(a);
  for (auto& v : Y.flat()) v = std::max(v, lo);
  return g.push(std::move(Y), g.any_requires_grad({a}), [&g, a, lo, out = g.size()] {
    const auto& dY = g.grad(Var{out});
    const auto& A = g.value(a);
    auto& d = g.grad(a);
    for (std::size_t k = 0; k < dY.size(); ++k)
      if (A[k] > lo) d[k] += dY[k];
  });
}

/// Sum of all elements as a 1x1 node.
template <class T>
Var sum_all(Graph<T>& g, Var a) {
  T s = 0;
  for (T v : g.value(a).flat()) s += v;
  return g.push(Matrix<T>(1, 1, s), g.any_requires_grad({a}), [&g, a, out = g.size()] {
    const T dy = g.grad(Var{out})[0];
    for (auto& v : g.grad(a).flat()) v += dy;
  });
}

}  // namespace cdseg::autograd
