#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cdseg/nets/config.hpp"
#include "cdseg/nets/hierarchy.hpp"
#include "cdseg/nets/layers.hpp"
#include "cdseg/nets/time_embed.hpp"

namespace cdseg::nets {

/// Features living on one level of a hierarchy.
template <class T>
struct FeatureMap {
  Var values;
  const Hierarchy* hierarchy = nullptr;
  std::size_t level = 0;

  const Level& grid() const { return hierarchy->levels[level]; }
};

/// Counts network passes; inference cost assertions read these.
struct PassCounters {
  std::size_t nn_encoder = 0;
  std::size_t nn_decoder = 0;
  std::size_t cn = 0;
  std::size_t ffm = 0;
};

/// Serialized-attention U-Net with grid pooling.
template <class T>
class UNet {
 public:
  struct Encoded {
    std::vector<Var> skips;  // input of encoder stage i, at level i
    Var bottleneck;          // at level stages()
  };

  UNet() = default;

  UNet(ParameterStore<T>& ps, const std::string& prefix, const UNetConfig& cfg, std::size_t in_channels,
       std::size_t out_channels, const NetworkConfig& net, SkipMode mode, std::mt19937_64& rng)
      : cfg_(cfg), out_channels_(out_channels) {
    const std::size_t s = cfg.stages();
    const auto ch = [](int v) { return static_cast<std::size_t>(v); };
    const std::size_t embed = ch(cfg.enc_channels[0]);
    embed_ = Linear<T>::make(ps, prefix + ".embed", in_channels, embed, ParamGroup::base, rng);
    embed_norm_ = LayerNorm<T>::make(ps, prefix + ".embed_norm", embed, ParamGroup::base);
    std::size_t block_no = 0;
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t in = i == 0 ? embed : ch(cfg.enc_channels[i - 1]);
      const std::string p = prefix + ".enc." + std::to_string(i);
      pools_.push_back(GridPool<T>::make(ps, p + ".pool", in, ch(cfg.enc_channels[i]), rng));
      enc_.emplace_back();
      for (int d = 0; d < cfg.enc_depths[i]; ++d)
        enc_.back().push_back(PatchAttentionBlock<T>::make(ps, p + ".block." + std::to_string(d), ch(cfg.enc_channels[i]),
                                                           cfg.enc_heads[i], net.mlp_ratio, block_no++ % 4, rng));
    }
    unpools_.resize(s);
    dec_.resize(s);
    for (std::size_t i = s; i-- > 0;) {
      const std::size_t from = i == s - 1 ? ch(cfg.enc_channels[s - 1]) : ch(cfg.dec_channels[i + 1]);
      const std::size_t skip = i == 0 ? embed : ch(cfg.enc_channels[i - 1]);
      const std::string p = prefix + ".dec." + std::to_string(i);
      unpools_[i] = GridUnpool<T>::make(ps, p + ".unpool", from, skip, ch(cfg.dec_channels[i]), mode,
                                        static_cast<T>(net.skip_scale), rng);
      for (int d = 0; d < cfg.dec_depths[i]; ++d)
        dec_[i].push_back(PatchAttentionBlock<T>::make(ps, p + ".block." + std::to_string(d), ch(cfg.dec_channels[i]),
                                                       cfg.dec_heads[i], net.mlp_ratio, block_no++ % 4, rng));
    }
    head_ = Linear<T>::make(ps, prefix + ".head", ch(cfg.dec_channels[0]), out_channels, ParamGroup::base, rng);
  }

  const UNetConfig& config() const noexcept { return cfg_; }
  std::size_t embed_channels() const noexcept { return static_cast<std::size_t>(cfg_.enc_channels[0]); }
  std::size_t bottleneck_channels() const noexcept { return static_cast<std::size_t>(cfg_.enc_channels.back()); }

  Var embed(Graph<T>& g, ParameterStore<T>& ps, Var input) const {
    return autograd::gelu(g, embed_norm_(g, ps, embed_(g, ps, input)));
  }

  Encoded encode(Graph<T>& g, ParameterStore<T>& ps, Var x, const Hierarchy& h, const DropPath& dp,
                 autograd::AttentionProbe* probe) const {
    check_hierarchy(h);
    Encoded e;
    for (std::size_t i = 0; i < cfg_.stages(); ++i) {
      e.skips.push_back(x);
      x = pools_[i](g, ps, x, h.parent[i], h.levels[i + 1].size());
      for (const auto& b : enc_[i]) x = b(g, ps, x, h.levels[i + 1], dp, probe);
    }
    e.bottleneck = x;
    return e;
  }

  Var decode(Graph<T>& g, ParameterStore<T>& ps, const Encoded& e, Var bottleneck, const Hierarchy& h,
             const DropPath& dp, autograd::AttentionProbe* probe) const {
    Var x = bottleneck;
    for (std::size_t i = cfg_.stages(); i-- > 0;) {
      x = unpools_[i](g, ps, x, e.skips[i], h.parent[i]);
      for (const auto& b : dec_[i]) x = b(g, ps, x, h.levels[i], dp, probe);
    }
    return head_(g, ps, x);
  }

 private:
  void check_hierarchy(const Hierarchy& h) const {
    if (h.parent.size() != cfg_.stages() || h.strides != cfg_.strides)
      throw ConsistencyError("UNet: pooling trail does not match the configured strides");
  }

  UNetConfig cfg_;
  std::size_t out_channels_ = 0;
  Linear<T> embed_;
  LayerNorm<T> embed_norm_;
  std::vector<GridPool<T>> pools_;
  std::vector<std::vector<PatchAttentionBlock<T>>> enc_;
  std::vector<GridUnpool<T>> unpools_;
  std::vector<std::vector<PatchAttentionBlock<T>>> dec_;
  Linear<T> head_;
};

/// Cross-attention fusion from noise-branch features into the segmentation
/// bottleneck:
///   Q = q(norm(F_cn)), K = k(s F_nn), V = v(s F_nn), W = softmax(Q K^T / sqrt(d))
///   O = out(W V) + F_cn,  F = ffn(norm(O)) + O
/// `out` has no bias, so a zero V projection leaves F = ffn(F_cn) + F_cn.
template <class T>
class FeatureFusion {
 public:
  FeatureFusion() = default;

  FeatureFusion(ParameterStore<T>& ps, const std::string& prefix, std::size_t cn_channels, std::size_t nn_channels,
                const NetworkConfig& net, std::mt19937_64& rng)
      : heads_(net.ffm_heads), feat_scale_(static_cast<T>(net.ffm_feat_scale)), nn_channels_(nn_channels) {
    const auto c = static_cast<std::size_t>(net.ffm_channels);
    for (int d = 0; d < net.ffm_depth; ++d) {
      const std::string p = prefix + "." + std::to_string(d);
      Block b;
      b.norm_q = LayerNorm<T>::make(ps, p + ".norm_q", cn_channels, ParamGroup::block);
      b.q = Linear<T>::make(ps, p + ".q", cn_channels, c, ParamGroup::block, rng);
      b.k = Linear<T>::make(ps, p + ".k", nn_channels, c, ParamGroup::block, rng);
      b.v = Linear<T>::make(ps, p + ".v", nn_channels, c, ParamGroup::block, rng);
      b.out = Linear<T>::make(ps, p + ".out", c, cn_channels, ParamGroup::block, rng, false);
      b.norm_ffn = LayerNorm<T>::make(ps, p + ".norm_ffn", cn_channels, ParamGroup::block);
      b.ffn = Mlp<T>::make(ps, p + ".ffn", cn_channels, net.mlp_ratio, ParamGroup::block, rng);
      blocks_.push_back(b);
    }
  }

  std::size_t depth() const noexcept { return blocks_.size(); }
  /// Parameter index of block d's value projection weight and bias.
  std::pair<std::size_t, std::size_t> value_projection(std::size_t d) const {
    return {blocks_[d].v.weight, blocks_[d].v.bias};
  }

  Var operator()(Graph<T>& g, ParameterStore<T>& ps, const FeatureMap<T>& cn, const FeatureMap<T>& nn,
                 autograd::AttentionProbe* probe) const {
    if (g.value(nn.values).cols() != nn_channels_)
      throw ConfigError("network.ffm", "noise-branch width " + std::to_string(g.value(nn.values).cols()) +
                                           " does not match the fusion key/value input " + std::to_string(nn_channels_));
    const auto groups = cross_groups(cn.grid(), nn.grid());
    Var kv_in = feat_scale_ == T(1) ? nn.values : autograd::scale(g, nn.values, feat_scale_);
    Var x = cn.values;
    for (const auto& b : blocks_) {
      Var a = autograd::grouped_attention(g, b.q(g, ps, b.norm_q(g, ps, x)), b.k(g, ps, kv_in), b.v(g, ps, kv_in),
                                          heads_, groups, probe);
      Var o = autograd::add(g, b.out(g, ps, a), x);
      x = autograd::add(g, b.ffn(g, ps, b.norm_ffn(g, ps, o)), o);
    }
    return x;
  }

 private:
  struct Block {
    LayerNorm<T> norm_q, norm_ffn;
    Linear<T> q, k, v, out;
    Mlp<T> ffn;
  };
  std::vector<Block> blocks_;
  int heads_ = 1;
  T feat_scale_ = T(1);
  std::size_t nn_channels_ = 0;
};

/// Inputs shared by both branches for one batch.
template <class T>
struct BatchInputs {
  Matrix<T> coords;     // N x 3 normalized positions
  Matrix<T> features;   // N x C clean condition
  const Hierarchy* nn_hierarchy = nullptr;
  const Hierarchy* cn_hierarchy = nullptr;
};

/// Noise network, feature fusion and conditional network with a single
/// parameter store.
template <class T>
class CnfModel {
 public:
  struct NoiseOutputs {
    Var prediction;  // N x nn_target_channels, invalid when decoding was skipped
    FeatureMap<T> bottleneck;
  };

  CnfModel(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate(cfg_);
    std::mt19937_64 rng(seed);
    const auto c = static_cast<std::size_t>(cfg_.in_channels);
    const auto nn_target = static_cast<std::size_t>(cfg_.nn_target_channels());
    const auto nn_in = nn_target + 3 + static_cast<std::size_t>(cfg_.nn_condition_channels());
    nn_ = UNet<T>(params_, "nn", cfg_.nn, nn_in, nn_target, cfg_, cfg_.skip_mode_nn, rng);
    if (cfg_.uses_time())
      time_proj_ = Linear<T>::make(params_, "nn.time_proj", static_cast<std::size_t>(cfg_.time_embed_dim),
                                   nn_.embed_channels(), ParamGroup::base, rng);
    if (cfg_.framework != Framework::ncf) {
      cn_ = UNet<T>(params_, "cn", cfg_.cn, c + 3, static_cast<std::size_t>(cfg_.num_classes), cfg_, cfg_.skip_mode_cn, rng);
      ffm_ = FeatureFusion<T>(params_, "ffm", cn_.bottleneck_channels(), nn_.bottleneck_channels(), cfg_, rng);
    }
  }

  const NetworkConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& parameters() noexcept { return params_; }
  const ParameterStore<T>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  const FeatureFusion<T>& fusion() const noexcept { return ffm_; }

  /// Noise network on `signal` (N x nn_target_channels) at per-element
  /// timesteps `t`. With `decode = false` only the encoder runs.
  NoiseOutputs nn_forward(Graph<T>& g, Var signal, const BatchInputs<T>& in, const std::vector<int>& t,
                          const DropPath& dp, bool decode = true, PassCounters* counters = nullptr,
                          autograd::AttentionProbe* probe = nullptr) {
    const Hierarchy& h = *in.nn_hierarchy;
    Var input = autograd::concat_cols(g, signal, g.constant(in.coords));
    if (cfg_.nn_condition_channels() > 0) input = autograd::concat_cols(g, input, g.constant(in.features));
    Var x = nn_.embed(g, params_, input);
    if (cfg_.uses_time()) {
      if (t.size() != h.levels[0].offsets.size()) throw ShapeError("nn_forward: one timestep per batch element required");
      Var te = time_proj_(g, params_, g.constant(time_embed<T>(t, cfg_.time_embed_dim)));
      x = autograd::add(g, x, autograd::gather_rows(g, te, h.levels[0].batch));
    }
    auto enc = nn_.encode(g, params_, x, h, dp, probe);
    if (counters) ++counters->nn_encoder;
    NoiseOutputs out;
    out.bottleneck = {enc.bottleneck, &h, h.depth() - 1};
    if (decode) {
      out.prediction = nn_.decode(g, params_, enc, enc.bottleneck, h, dp, probe);
      if (counters) ++counters->nn_decoder;
    }
    return out;
  }

  /// Per-point class logits (N x K). Fusion runs only when a noise-branch
  /// bottleneck is given.
  Var cn_forward(Graph<T>& g, const BatchInputs<T>& in, const std::optional<FeatureMap<T>>& nn_bottleneck,
                 const DropPath& dp, PassCounters* counters = nullptr, autograd::AttentionProbe* probe = nullptr) {
    if (cfg_.framework == Framework::ncf) throw ConsistencyError("cn_forward: ncf models have no conditional network");
    const Hierarchy& h = *in.cn_hierarchy;
    Var x = cn_.embed(g, params_, autograd::concat_cols(g, g.constant(in.features), g.constant(in.coords)));
    auto enc = cn_.encode(g, params_, x, h, dp, probe);
    Var bottleneck = enc.bottleneck;
    if (nn_bottleneck) {
      bottleneck = ffm_(g, params_, FeatureMap<T>{bottleneck, &h, h.depth() - 1}, *nn_bottleneck, probe);
      if (counters) ++counters->ffm;
    }
    if (counters) ++counters->cn;
    return cn_.decode(g, params_, enc, bottleneck, h, dp, probe);
  }

 private:
  NetworkConfig cfg_;
  ParameterStore<T> params_;
  UNet<T> nn_, cn_;
  FeatureFusion<T> ffm_;
  Linear<T> time_proj_;
};

}  // namespace cdseg::nets
