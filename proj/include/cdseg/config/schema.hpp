#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cdseg/core/error.hpp"
#include "cdseg/nets/config.hpp"
#include "cdseg/diffusion/perturbation.hpp"
#include "cdseg/training/config.hpp"

namespace cdseg::config {

using json = nlohmann::ordered_json;

// Enum <-> string tables.

inline std::string to_string(nets::Framework f) {
  switch (f) {
    case nets::Framework::cnf: return "cnf";
    case nets::Framework::ncf: return "ncf";
    case nets::Framework::plain: return "plain";
  }
  return "?";
}
inline std::string to_string(nets::SkipMode m) {
  switch (m) {
    case nets::SkipMode::add: return "add";
    case nets::SkipMode::concat: return "concat";
    case nets::SkipMode::multiply: return "multiply";
  }
  return "?";
}
inline std::string to_string(nets::FitTarget f) { return f == nets::FitTarget::epsilon ? "epsilon" : "x0"; }
inline std::string to_string(nets::NnInput n) {
  switch (n) {
    case nets::NnInput::features: return "features";
    case nets::NnInput::labels: return "labels";
    case nets::NnInput::positions: return "positions";
  }
  return "?";
}

namespace detail {

template <class E>
E parse_enum(const std::string& s, const std::string& path, std::initializer_list<std::pair<const char*, E>> table) {
  std::string names;
  for (const auto& [n, e] : table) {
    if (s == n) return e;
    names += names.empty() ? n : std::string(", ") + n;
  }
  throw ConfigError(path, "unknown value '" + s + "' (expected one of: " + names + ")");
}

}  // namespace detail

inline void parse_value(const json& j, const std::string& path, nets::Framework& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<nets::Framework>(j.get<std::string>(), path,
                                            {{"cnf", nets::Framework::cnf}, {"ncf", nets::Framework::ncf}, {"plain", nets::Framework::plain}});
}
inline void parse_value(const json& j, const std::string& path, nets::SkipMode& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<nets::SkipMode>(
      j.get<std::string>(), path, {{"add", nets::SkipMode::add}, {"concat", nets::SkipMode::concat}, {"multiply", nets::SkipMode::multiply}});
}
inline void parse_value(const json& j, const std::string& path, nets::FitTarget& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<nets::FitTarget>(j.get<std::string>(), path,
                                            {{"epsilon", nets::FitTarget::epsilon}, {"x0", nets::FitTarget::x0}});
}
inline void parse_value(const json& j, const std::string& path, nets::NnInput& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<nets::NnInput>(
      j.get<std::string>(), path,
      {{"features", nets::NnInput::features}, {"labels", nets::NnInput::labels}, {"positions", nets::NnInput::positions}});
}
inline void parse_value(const json& j, const std::string& path, diffusion::ScheduleKind& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<diffusion::ScheduleKind>(
      j.get<std::string>(), path, {{"linear", diffusion::ScheduleKind::linear}, {"cosine", diffusion::ScheduleKind::cosine}});
}
inline void parse_value(const json& j, const std::string& path, training::LossStrategy& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<training::LossStrategy>(j.get<std::string>(), path,
                                                   {{"EW", training::LossStrategy::ew},
                                                    {"RLW", training::LossStrategy::rlw},
                                                    {"UW", training::LossStrategy::uw},
                                                    {"GLS", training::LossStrategy::gls}});
}
inline void parse_value(const json& j, const std::string& path, diffusion::NoiseFamily& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = detail::parse_enum<diffusion::NoiseFamily>(j.get<std::string>(), path,
                                                   {{"gaussian", diffusion::NoiseFamily::gaussian},
                                                    {"uniform", diffusion::NoiseFamily::uniform},
                                                    {"laplace", diffusion::NoiseFamily::laplace},
                                                    {"poisson", diffusion::NoiseFamily::poisson}});
}

inline void parse_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
  out = j.get<bool>();
}
inline void parse_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = j.get<std::string>();
}
inline void parse_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  out = j.get<double>();
}
template <class I>
  requires std::is_integral_v<I>
void parse_value(const json& j, const std::string& path, I& out) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError(path, "expected an integer");
  if constexpr (std::is_unsigned_v<I>) {
    if (j.is_number_integer() && j.get<long long>() < 0) throw ConfigError(path, "expected a nonnegative integer");
  }
  out = j.get<I>();
}
template <class V>
void parse_value(const json& j, const std::string& path, std::vector<V>& out) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  out.clear();
  out.resize(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) parse_value(j[i], path + "[" + std::to_string(i) + "]", out[i]);
}
inline void parse_value(const json& j, const std::string& path, std::pair<double, double>& out) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path, "expected a two-element array");
  parse_value(j[0], path + "[0]", out.first);
  parse_value(j[1], path + "[1]", out.second);
}
template <class V>
void parse_value(const json& j, const std::string& path, std::optional<V>& out) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  V v{};
  parse_value(j, path, v);
  out = v;
}
template <class V, std::size_t N>
void parse_value(const json& j, const std::string& path, std::array<V, N>& out) {
  if (!j.is_array() || j.size() != N) throw ConfigError(path, "expected a " + std::to_string(N) + "-element array");
  for (std::size_t i = 0; i < N; ++i) parse_value(j[i], path + "[" + std::to_string(i) + "]", out[i]);
}

/// Strict object reader: every key must be consumed, otherwise the first
/// unknown one is reported with its full path.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class V>
  void get(const std::string& key, V& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    parse_value(j_.at(key), path_of(key), out);
  }

  /// Nested object handled by `fn(Fields&)`.
  template <class Fn>
  void object(const std::string& key, Fn&& fn) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    Fields sub(j_.at(key), path_of(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(path_of(k), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// Struct readers / writers.

inline void read(Fields& f, nets::UNetConfig& u) {
  f.get("strides", u.strides);
  f.get("enc_depths", u.enc_depths);
  f.get("enc_channels", u.enc_channels);
  f.get("enc_heads", u.enc_heads);
  f.get("dec_depths", u.dec_depths);
  f.get("dec_channels", u.dec_channels);
  f.get("dec_heads", u.dec_heads);
}

inline json write(const nets::UNetConfig& u) {
  return {{"strides", u.strides},         {"enc_depths", u.enc_depths}, {"enc_channels", u.enc_channels},
          {"enc_heads", u.enc_heads},     {"dec_depths", u.dec_depths}, {"dec_channels", u.dec_channels},
          {"dec_heads", u.dec_heads}};
}

inline void read(Fields& f, nets::NetworkConfig& c) {
  f.get("in_channels", c.in_channels);
  f.get("num_classes", c.num_classes);
  f.get("framework", c.framework);
  f.object("nn", [&](Fields& s) { read(s, c.nn); });
  f.object("cn", [&](Fields& s) { read(s, c.cn); });
  f.get("ffm_depth", c.ffm_depth);
  f.get("ffm_channels", c.ffm_channels);
  f.get("ffm_heads", c.ffm_heads);
  f.get("ffm_feat_scale", c.ffm_feat_scale);
  f.get("patch_size", c.patch_size);
  f.get("mlp_ratio", c.mlp_ratio);
  f.get("drop_path", c.drop_path);
  f.get("time_embed_dim", c.time_embed_dim);
  f.get("skip_mode_nn", c.skip_mode_nn);
  f.get("skip_mode_cn", c.skip_mode_cn);
  f.get("skip_scale", c.skip_scale);
  f.get("fit_target", c.fit_target);
  f.get("nn_input", c.nn_input);
  f.get("grid_size", c.grid_size);
}

inline json write(const nets::NetworkConfig& c) {
  return {{"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"framework", to_string(c.framework)},
          {"nn", write(c.nn)},
          {"cn", write(c.cn)},
          {"ffm_depth", c.ffm_depth},
          {"ffm_channels", c.ffm_channels},
          {"ffm_heads", c.ffm_heads},
          {"ffm_feat_scale", c.ffm_feat_scale},
          {"patch_size", c.patch_size},
          {"mlp_ratio", c.mlp_ratio},
          {"drop_path", c.drop_path},
          {"time_embed_dim", c.time_embed_dim},
          {"skip_mode_nn", to_string(c.skip_mode_nn)},
          {"skip_mode_cn", to_string(c.skip_mode_cn)},
          {"skip_scale", c.skip_scale},
          {"fit_target", to_string(c.fit_target)},
          {"nn_input", to_string(c.nn_input)},
          {"grid_size", c.grid_size}};
}

inline void read(Fields& f, training::ScheduleConfig& s) {
  f.get("kind", s.kind);
  f.get("T", s.T);
  f.get("range", s.range);
}

inline json write(const training::ScheduleConfig& s) {
  return {{"kind", diffusion::to_string(s.kind)}, {"T", s.T}, {"range", {s.range.first, s.range.second}}};
}

inline void read(Fields& f, training::LossConfig& l) {
  f.get("lambda", l.lambda);
  f.get("strategy", l.strategy);
}

inline json write(const training::LossConfig& l) {
  return {{"lambda", l.lambda}, {"strategy", training::to_string(l.strategy)}};
}

inline void read(Fields& f, training::TrainConfig& t) {
  f.get("lr", t.lr);
  f.get("block_lr", t.block_lr);
  f.get("weight_decay", t.weight_decay);
  f.get("batch_size", t.batch_size);
  f.get("epochs", t.epochs);
  f.get("max_steps", t.max_steps);
  f.get("val_every", t.val_every);
  f.get("voxel_size", t.voxel_size);
  f.get("grad_clip", t.grad_clip);
}

inline json write(const training::TrainConfig& t) {
  return {{"lr", t.lr},
          {"block_lr", t.block_lr},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"max_steps", t.max_steps},
          {"val_every", t.val_every},
          {"voxel_size", t.voxel_size},
          {"grad_clip", t.grad_clip ? json(*t.grad_clip) : json(nullptr)}};
}

/// Parses a whole object strictly into `out`.
template <class S>
S parse_strict(const json& j, const std::string& path, S out = {}) {
  Fields f(j, path);
  read(f, out);
  f.finish();
  return out;
}

}  // namespace cdseg::config
