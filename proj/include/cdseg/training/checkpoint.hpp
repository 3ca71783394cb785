#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdseg/config/schema.hpp"
#include "cdseg/nets/model.hpp"
#include "cdseg/training/balance.hpp"
#include "cdseg/training/optimizer.hpp"

namespace cdseg::training {

inline constexpr char kCheckpointMagic[8] = {'C', 'D', 'S', 'E', 'G', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

/// Loaded checkpoint header plus the raw tensor payload.
struct CheckpointFile {
  config::json header;
  std::vector<char> payload;

  nets::NetworkConfig network() const { return config::parse_strict<nets::NetworkConfig>(header.at("network"), "network"); }
  ScheduleConfig schedule() const { return config::parse_strict<ScheduleConfig>(header.at("schedule"), "schedule"); }
  const config::json& state() const { return header.at("state"); }
};

/// Container layout: 8-byte magic, u32 version, u64 header length, JSON
/// header, then tensors as contiguous row-major arrays at the offsets listed
/// in the header.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const nets::CnfModel<T>& model, const ScheduleConfig& sched,
                     const AdamW<T>* opt = nullptr, const BalanceState<T>* bal = nullptr,
                     const config::json& state = config::json::object()) {
  std::vector<std::pair<std::string, const Matrix<T>*>> tensors;
  const auto& ps = model.parameters().all();
  for (const auto& p : ps) tensors.emplace_back(p.name, &p.value);
  if (bal)
    for (const auto& p : bal->log_var) tensors.emplace_back(p.name, &p.value);
  if (opt && !opt->first_moments().empty()) {
    const auto& o = *opt;
    const auto n = o.first_moments().size();
    std::vector<std::string> names;
    for (const auto& p : ps) names.push_back(p.name);
    if (bal)
      for (const auto& p : bal->log_var) names.push_back(p.name);
    if (names.size() != n) throw ConsistencyError("save_checkpoint: optimizer state does not match parameters");
    for (std::size_t i = 0; i < n; ++i) {
      tensors.emplace_back("adam.m." + names[i], &o.first_moments()[i]);
      tensors.emplace_back("adam.v." + names[i], &o.second_moments()[i]);
    }
  }
  config::json header;
  header["format_version"] = kCheckpointVersion;
  header["dtype"] = dtype_name<T>();
  header["network"] = config::write(model.config());
  header["schedule"] = config::write(sched);
  config::json st = state;
  st["optimizer_steps"] = opt ? opt->steps() : 0;
  header["state"] = st;
  auto index = config::json::array();
  std::size_t offset = 0;
  for (const auto& [name, m] : tensors) {
    index.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += m->size() * sizeof(T);
  }
  header["tensors"] = index;
  const std::string h = header.dump();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, 8);
    const std::uint32_t v = kCheckpointVersion;
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, m] : tensors)
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(T)));
    if (!out) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t v = 0;
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw Error(path.string() + ": not a checkpoint file");
  if (v != kCheckpointVersion) throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  CheckpointFile f;
  f.header = config::json::parse(h);
  f.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return f;
}

namespace detail {

template <class T>
void fill_tensor(const CheckpointFile& f, const std::map<std::string, config::json>& index, const std::string& name,
                 Matrix<T>& dst) {
  auto it = index.find(name);
  if (it == index.end()) throw ConsistencyError("checkpoint: missing tensor '" + name + "'");
  const auto rows = it->second.at("rows").get<std::size_t>();
  const auto cols = it->second.at("cols").get<std::size_t>();
  if (rows != dst.rows() || cols != dst.cols())
    throw ShapeError("checkpoint: tensor '" + name + "' is " + shape_string(rows, cols) + ", config expects " +
                     shape_string(dst.rows(), dst.cols()));
  const auto off = it->second.at("offset").get<std::size_t>();
  const std::size_t bytes = dst.size() * sizeof(T);
  if (off + bytes > f.payload.size()) throw ConsistencyError("checkpoint: truncated tensor '" + name + "'");
  if (bytes) std::memcpy(dst.data(), f.payload.data() + off, bytes);
}

}  // namespace detail

/// Overwrites model (and optionally optimizer / balance) state from a
/// checkpoint whose network config must equal the model's.
template <class T>
void load_checkpoint(const CheckpointFile& f, nets::CnfModel<T>& model, AdamW<T>* opt = nullptr,
                     BalanceState<T>* bal = nullptr) {
  if (f.header.at("dtype").get<std::string>() != dtype_name<T>())
    throw ConsistencyError("checkpoint: dtype " + f.header.at("dtype").get<std::string>() + " does not match the model");
  if (f.header.at("network") != config::write(model.config()))
    throw ConsistencyError("checkpoint: network config differs from the model being loaded");
  std::map<std::string, config::json> index;
  for (const auto& t : f.header.at("tensors")) index.emplace(t.at("name").get<std::string>(), t);
  std::vector<std::string> names;
  for (auto& p : model.parameters().all()) {
    detail::fill_tensor(f, index, p.name, p.value);
    names.push_back(p.name);
  }
  if (bal)
    for (auto& p : bal->log_var) {
      if (index.count(p.name)) detail::fill_tensor(f, index, p.name, p.value);
      names.push_back(p.name);
    }
  if (opt && index.count("adam.m." + names.front())) {
    auto& m = opt->first_moments();
    auto& v = opt->second_moments();
    m.clear();
    v.clear();
    for (const auto& n : names) {
      const auto& meta = index.at("adam.m." + n);
      m.emplace_back(meta.at("rows").get<std::size_t>(), meta.at("cols").get<std::size_t>());
      v.emplace_back(meta.at("rows").get<std::size_t>(), meta.at("cols").get<std::size_t>());
      detail::fill_tensor(f, index, "adam.m." + n, m.back());
      detail::fill_tensor(f, index, "adam.v." + n, v.back());
    }
    opt->set_steps(f.state().value("optimizer_steps", std::size_t{0}));
  }
}

/// Builds a model from the checkpoint's own config and loads its weights.
template <class T>
std::unique_ptr<nets::CnfModel<T>> load_model(const CheckpointFile& f) {
  auto model = std::make_unique<nets::CnfModel<T>>(f.network(), 0);
  load_checkpoint(f, *model);
  return model;
}

}  // namespace cdseg::training
