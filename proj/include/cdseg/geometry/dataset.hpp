#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/geometry/cloud_io.hpp"
#include "cdseg/geometry/point_cloud.hpp"

namespace cdseg::geometry {

struct Scene {
  std::string name;
  std::string split;  // "train" | "val" | free-form tag
  PointCloud cloud;
};

using Dataset = std::vector<Scene>;

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes every scene as `<name>.txt` and a manifest of `<file> <split>` rows.
inline void save_dataset(const Dataset& scenes, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream man(dir / kManifestName);
  if (!man) throw Error("save_dataset: cannot write manifest in " + dir.string());
  man << "cdseg-manifest v1\n";
  for (const auto& s : scenes) {
    const std::string file = s.name + ".txt";
    save_cloud(s.cloud, dir / file);
    man << file << ' ' << s.split << '\n';
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream man(dir / kManifestName);
  if (!man) throw Error("load_dataset: no manifest in " + dir.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(man, line) || line != "cdseg-manifest v1") throw ParseError(1, "malformed manifest header");
  Dataset out;
  while (std::getline(man, line)) {
    ++line_no;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw ParseError(line_no, "manifest rows are '<file> <split>'");
    Scene s;
    s.name = std::filesystem::path(std::string(tok[0])).stem().string();
    s.split = std::string(tok[1]);
    s.cloud = load_cloud(dir / std::string(tok[0]));
    out.push_back(std::move(s));
  }
  return out;
}

inline Dataset filter_split(const Dataset& all, const std::string& split) {
  Dataset out;
  for (const auto& s : all)
    if (s.split == split) out.push_back(s);
  return out;
}

}  // namespace cdseg::geometry
