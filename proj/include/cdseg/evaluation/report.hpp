#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "cdseg/config/schema.hpp"
#include "cdseg/evaluation/harness.hpp"

namespace cdseg::evaluation {

using config::json;

inline constexpr int kResultsSchemaVersion = 1;

/// FNV-1a 64 of the compact config dump, as 16 hex digits.
inline std::string config_hash(const json& resolved) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : resolved.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json to_json(const MetricsReport& m) {
  json per = json::array();
  for (double v : m.per_class_iou) per.push_back(v < 0 ? json(nullptr) : json(v));
  return {{"miou", m.miou},
          {"macc", m.macc},
          {"allacc", m.allacc},
          {"per_class_iou", per},
          {"classes", m.counts.classes()},
          {"confusion", m.counts.counts()}};
}

inline MetricsReport metrics_from_json(const json& j) {
  const int k = j.at("classes").get<int>();
  const auto counts = j.at("confusion").get<std::vector<std::uint64_t>>();
  if (counts.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(k))
    throw ParseError(0, "metrics: confusion size does not match classes");
  ConfusionMatrix cm(k);
  std::vector<int> gt, pred;
  for (int g = 0; g < k; ++g)
    for (int p = 0; p < k; ++p)
      for (std::uint64_t n = 0; n < counts[static_cast<std::size_t>(g * k + p)]; ++n) {
        gt.push_back(g);
        pred.push_back(p);
      }
  cm.accumulate(gt, pred);
  return metrics(cm);
}

inline json document(const std::string& kind, const json& resolved_config) {
  return {{"schema_version", kResultsSchemaVersion}, {"kind", kind}, {"config_hash", config_hash(resolved_config)}};
}

inline json to_json(const SweepResult& r, const json& resolved_config) {
  json d = document(r.kind, resolved_config);
  d["axis"] = r.axis;
  d["model_id"] = r.model_id;
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"dist", c.dist}, {"value", c.value}, {"seed", c.seed}, {"metrics", to_json(c.report)}});
  d["cells"] = cells;
  return d;
}

inline json to_json(const CompareReport& r, const json& resolved_config) {
  json d = document("compare", resolved_config);
  d["threshold"] = r.threshold;
  d["budget"] = r.budget;
  json runs = json::array();
  for (const auto& v : r.runs) {
    json curve = json::array(), cost = json::array();
    for (const auto& p : v.curve) curve.push_back({{"step", p.step}, {"miou", p.miou}});
    for (const auto& c : v.cost)
      cost.push_back({{"steps", c.steps}, {"nn_encoder", c.nn_encoder}, {"nn_decoder", c.nn_decoder}, {"cn", c.cn}, {"seconds", c.seconds}});
    const bool reached = v.steps_to_threshold != std::numeric_limits<std::size_t>::max();
    runs.push_back({{"name", v.name},
                    {"framework", config::to_string(v.framework)},
                    {"seed", v.seed},
                    {"steps_to_threshold", reached ? json(v.steps_to_threshold) : json(nullptr)},
                    {"curve", curve},
                    {"loss", v.loss},
                    {"inference_cost", cost}});
  }
  d["runs"] = runs;
  return d;
}

inline json metrics_document(const MetricsReport& m, const json& resolved_config, const std::string& mode) {
  json d = document("eval", resolved_config);
  d["mode"] = mode;
  d["metrics"] = to_json(m);
  return d;
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace cdseg::evaluation
