#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"

namespace cdseg::nets {

enum class SkipMode { add, concat, multiply };
enum class FitTarget { epsilon, x0 };
enum class NnInput { features, labels, positions };

/// cnf: noise network is an auxiliary feature generator for the segmentation
/// network. ncf: the noise network diffuses one-hot labels conditioned on the
/// input. plain: the noise network reconstructs its clean input, no diffusion.
enum class Framework { cnf, ncf, plain };

// Encoder / decoder shape of one U-Net. A pooling step with strides[i]
// precedes encoder stage i; decoder stage i runs at the resolution of
// encoder stage i's input.
struct UNetConfig {
  std::vector<int> strides;
  std::vector<int> enc_depths, enc_channels, enc_heads;
  std::vector<int> dec_depths, dec_channels, dec_heads;

  std::size_t stages() const noexcept { return enc_depths.size(); }
};

struct NetworkConfig {
  int in_channels = 6;
  int num_classes = 4;
  Framework framework = Framework::cnf;
  UNetConfig nn, cn;
  int ffm_depth = 1;
  int ffm_channels = 64;
  int ffm_heads = 8;
  double ffm_feat_scale = 1.0;  // multiplier on noise-branch features entering fusion
  int patch_size = 128;
  double mlp_ratio = 4.0;
  double drop_path = 0.0;
  int time_embed_dim = 128;
  SkipMode skip_mode_nn = SkipMode::add;
  SkipMode skip_mode_cn = SkipMode::concat;
  double skip_scale = 1.0 / std::sqrt(2.0);
  FitTarget fit_target = FitTarget::epsilon;
  NnInput nn_input = NnInput::features;
  double grid_size = 0.05;  // base cell edge in meters for pooling and serialization

  /// Channels of the quantity the noise network diffuses (and predicts).
  int nn_target_channels() const {
    switch (nn_input) {
      case NnInput::features: return in_channels;
      case NnInput::labels: return num_classes;
      case NnInput::positions: return 3;
    }
    return 0;
  }
  /// Extra clean condition channels concatenated to the noise-network input.
  int nn_condition_channels() const { return framework == Framework::ncf ? in_channels : 0; }
  bool uses_time() const { return framework != Framework::plain; }
  bool uses_fusion() const { return framework != Framework::ncf; }
};

inline void validate_unet(const UNetConfig& u, const std::string& prefix) {
  const std::size_t s = u.enc_depths.size();
  auto same = [&](const std::vector<int>& v, const char* name) {
    if (v.size() != s)
      throw ConfigError(prefix + "." + name, "expected " + std::to_string(s) + " stages, got " + std::to_string(v.size()));
  };
  if (s == 0) throw ConfigError(prefix + ".enc_depths", "at least one stage required");
  same(u.strides, "strides");
  same(u.enc_channels, "enc_channels");
  same(u.enc_heads, "enc_heads");
  same(u.dec_depths, "dec_depths");
  same(u.dec_channels, "dec_channels");
  same(u.dec_heads, "dec_heads");
  for (std::size_t i = 0; i < s; ++i) {
    if (u.strides[i] < 1) throw ConfigError(prefix + ".strides", "strides must be >= 1");
    if (u.enc_depths[i] < 0 || u.dec_depths[i] < 0) throw ConfigError(prefix + ".depths", "depths must be >= 0");
    if (u.enc_channels[i] < 1 || u.dec_channels[i] < 1) throw ConfigError(prefix + ".channels", "channels must be >= 1");
    if (u.enc_heads[i] < 1 || u.enc_channels[i] % u.enc_heads[i] != 0)
      throw ConfigError(prefix + ".enc_heads", "enc_channels[" + std::to_string(i) + "] not divisible by heads");
    if (u.dec_heads[i] < 1 || u.dec_channels[i] % u.dec_heads[i] != 0)
      throw ConfigError(prefix + ".dec_heads", "dec_channels[" + std::to_string(i) + "] not divisible by heads");
  }
}

inline void validate(const NetworkConfig& c) {
  if (c.in_channels < 1) throw ConfigError("network.in_channels", "must be >= 1");
  if (c.num_classes < 2) throw ConfigError("network.num_classes", "must be >= 2");
  validate_unet(c.nn, "network.nn");
  validate_unet(c.cn, "network.cn");
  if (c.patch_size < 1) throw ConfigError("network.patch_size", "must be >= 1");
  if (c.mlp_ratio <= 0) throw ConfigError("network.mlp_ratio", "must be > 0");
  if (c.drop_path < 0 || c.drop_path >= 1) throw ConfigError("network.drop_path", "must be in [0, 1)");
  if (c.time_embed_dim < 2 || c.time_embed_dim % 2) throw ConfigError("network.time_embed_dim", "must be even and >= 2");
  if (c.ffm_depth < 0) throw ConfigError("network.ffm_depth", "must be >= 0");
  if (c.ffm_heads < 1 || c.ffm_channels % c.ffm_heads)
    throw ConfigError("network.ffm_heads", "ffm_channels not divisible by ffm_heads");
  if (c.skip_mode_nn != SkipMode::add) throw ConfigError("network.skip_mode_nn", "noise network skips support 'add' only");
  if (c.grid_size <= 0) throw ConfigError("network.grid_size", "must be > 0");
  if (c.framework == Framework::ncf && c.nn_input != NnInput::labels)
    throw ConfigError("network.nn_input", "ncf framework requires nn_input = labels");
  if (c.framework != Framework::ncf && c.nn_input == NnInput::labels)
    throw ConfigError("network.nn_input", "nn_input = labels is only meaningful with framework = ncf");
  if (c.framework == Framework::plain && c.fit_target == FitTarget::x0)
    throw ConfigError("network.fit_target", "fit_target = x0 requires diffusion (framework cnf or ncf)");
}

}  // namespace cdseg::nets
