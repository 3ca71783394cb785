#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdseg/autograd/ops.hpp"
#include "cdseg/nets/hierarchy.hpp"

namespace cdseg::nets {

using autograd::Graph;
using autograd::ParamGroup;
using autograd::Parameter;
using autograd::Var;

/// Owns every parameter of a model; layers refer to entries by index.
template <class T>
class ParameterStore {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, ParamGroup group) {
    Parameter<T> p;
    p.name = std::move(name);
    p.value = Matrix<T>(rows, cols);
    p.grad = Matrix<T>(rows, cols);
    p.group = group;
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::vector<Parameter<T>>& all() noexcept { return params_; }
  const std::vector<Parameter<T>>& all() const noexcept { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

 private:
  std::vector<Parameter<T>> params_;
};

/// Stochastic-depth state for one forward pass. Disabled unless training
/// with a positive rate.
struct DropPath {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
  bool active() const noexcept { return rate > 0.0 && rng != nullptr; }
};

template <class T>
struct Linear {
  std::size_t weight = 0, bias = 0;
  bool has_bias = true;
  std::size_t in = 0, out = 0;

  static Linear make(ParameterStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, ParamGroup grp,
                     std::mt19937_64& rng, bool bias = true) {
    Linear l;
    l.in = in;
    l.out = out;
    l.has_bias = bias;
    l.weight = ps.add(name + ".weight", in, out, grp);
    const T bound = T(1) / std::sqrt(static_cast<T>(in));
    std::uniform_real_distribution<double> u(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto& v : ps[l.weight].value.flat()) v = static_cast<T>(u(rng));
    if (bias) {
      l.bias = ps.add(name + ".bias", 1, out, grp);
      for (auto& v : ps[l.bias].value.flat()) v = static_cast<T>(u(rng));
    }
    return l;
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var x) const {
    return autograd::linear(g, x, g.param(ps[weight]), has_bias ? g.param(ps[bias]) : Var{});
  }
};

template <class T>
struct LayerNorm {
  std::size_t gamma = 0, beta = 0;

  static LayerNorm make(ParameterStore<T>& ps, const std::string& name, std::size_t c, ParamGroup grp) {
    LayerNorm n;
    n.gamma = ps.add(name + ".gamma", 1, c, grp);
    n.beta = ps.add(name + ".beta", 1, c, grp);
    ps[n.gamma].value.fill(T(1));
    return n;
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var x) const {
    return autograd::layer_norm(g, x, g.param(ps[gamma]), g.param(ps[beta]));
  }
};

template <class T>
struct Mlp {
  Linear<T> fc1, fc2;

  static Mlp make(ParameterStore<T>& ps, const std::string& name, std::size_t c, double ratio, ParamGroup grp,
                  std::mt19937_64& rng) {
    const auto hidden = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(c) * ratio)));
    return {Linear<T>::make(ps, name + ".fc1", c, hidden, grp, rng), Linear<T>::make(ps, name + ".fc2", hidden, c, grp, rng)};
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var x) const {
    return fc2(g, ps, autograd::gelu(g, fc1(g, ps, x)));
  }
};

template <class T>
Var drop_path(Graph<T>& g, Var x, const Level& level, const DropPath& dp) {
  if (!dp.active()) return x;
  const std::size_t batches = level.offsets.size();
  std::bernoulli_distribution keep(1.0 - dp.rate);
  std::vector<T> per_batch(batches);
  for (auto& s : per_batch) s = keep(*dp.rng) ? static_cast<T>(1.0 / (1.0 - dp.rate)) : T(0);
  std::vector<T> rows(level.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = per_batch[level.batch[i]];
  return autograd::row_scale(g, x, std::move(rows));
}

/// Pre-norm transformer block: self-attention within serialized patches of
/// one curve order, then an MLP, each wrapped in a residual connection.
template <class T>
struct PatchAttentionBlock {
  LayerNorm<T> norm1, norm2;
  Linear<T> q, k, v, proj;
  Mlp<T> mlp;
  int heads = 1;
  std::size_t order = 0;  // index into kAllOrders

  static PatchAttentionBlock make(ParameterStore<T>& ps, const std::string& name, std::size_t c, int heads,
                                  double mlp_ratio, std::size_t order, std::mt19937_64& rng) {
    if (heads < 1 || c % static_cast<std::size_t>(heads) != 0)
      throw ConfigError(name + ".heads", "channels " + std::to_string(c) + " not divisible by heads " + std::to_string(heads));
    PatchAttentionBlock b;
    b.heads = heads;
    b.order = order;
    b.norm1 = LayerNorm<T>::make(ps, name + ".norm1", c, ParamGroup::block);
    b.q = Linear<T>::make(ps, name + ".attn.q", c, c, ParamGroup::block, rng);
    b.k = Linear<T>::make(ps, name + ".attn.k", c, c, ParamGroup::block, rng);
    b.v = Linear<T>::make(ps, name + ".attn.v", c, c, ParamGroup::block, rng);
    b.proj = Linear<T>::make(ps, name + ".attn.proj", c, c, ParamGroup::block, rng);
    b.norm2 = LayerNorm<T>::make(ps, name + ".norm2", c, ParamGroup::block);
    b.mlp = Mlp<T>::make(ps, name + ".mlp", c, mlp_ratio, ParamGroup::block, rng);
    return b;
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var x, const Level& level, const DropPath& dp,
                 autograd::AttentionProbe* probe = nullptr) const {
    Var h = norm1(g, ps, x);
    Var a = autograd::grouped_attention(g, q(g, ps, h), k(g, ps, h), v(g, ps, h), heads, level.patches[order], probe);
    x = autograd::add(g, x, drop_path(g, proj(g, ps, a), level, dp));
    Var m = mlp(g, ps, norm2(g, ps, x));
    return autograd::add(g, x, drop_path(g, m, level, dp));
  }
};

/// Linear projection, grid max-pooling onto the next level, norm, GELU.
template <class T>
struct GridPool {
  Linear<T> proj;
  LayerNorm<T> norm;

  static GridPool make(ParameterStore<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng) {
    return {Linear<T>::make(ps, name + ".proj", in, out, ParamGroup::base, rng),
            LayerNorm<T>::make(ps, name + ".norm", out, ParamGroup::base)};
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var x, const std::vector<std::uint32_t>& parent,
                 std::size_t coarse_rows) const {
    Var p = autograd::segment_max(g, proj(g, ps, x), parent, coarse_rows);
    return autograd::gelu(g, norm(g, ps, p));
  }
};

/// Broadcasts coarse features back to the finer level and merges the skip
/// features by addition (scaled), concatenation, or multiplication.
template <class T>
struct GridUnpool {
  Linear<T> proj, proj_skip, fuse;
  LayerNorm<T> norm;
  SkipMode mode = SkipMode::add;
  T skip_scale = T(1);

  static GridUnpool make(ParameterStore<T>& ps, const std::string& name, std::size_t in, std::size_t skip,
                         std::size_t out, SkipMode mode, T skip_scale, std::mt19937_64& rng) {
    GridUnpool u;
    u.mode = mode;
    u.skip_scale = skip_scale;
    u.proj = Linear<T>::make(ps, name + ".proj", in, out, ParamGroup::base, rng);
    u.proj_skip = Linear<T>::make(ps, name + ".proj_skip", skip, out, ParamGroup::base, rng);
    if (mode == SkipMode::concat) u.fuse = Linear<T>::make(ps, name + ".fuse", 2 * out, out, ParamGroup::base, rng);
    u.norm = LayerNorm<T>::make(ps, name + ".norm", out, ParamGroup::base);
    return u;
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, Var coarse, Var skip,
                 const std::vector<std::uint32_t>& parent) const {
    Var up = autograd::gather_rows(g, proj(g, ps, coarse), parent);
    Var sk = proj_skip(g, ps, skip);
    Var merged;
    switch (mode) {
      case SkipMode::add: merged = autograd::add(g, up, skip_scale == T(1) ? sk : autograd::scale(g, sk, skip_scale)); break;
      case SkipMode::multiply: merged = autograd::mul(g, up, sk); break;
      case SkipMode::concat: merged = fuse(g, ps, autograd::concat_cols(g, up, sk)); break;
    }
    return autograd::gelu(g, norm(g, ps, merged));
  }
};

}  // namespace cdseg::nets
