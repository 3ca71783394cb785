#pragma once

#include <random>
#include <vector>

#include "cdseg/geometry/synth.hpp"
#include "cdseg/nets/config.hpp"
#include "cdseg/training/batch.hpp"
#include "cdseg/training/config.hpp"

namespace cdseg::fixture {

/// Small two-branch network that runs in milliseconds.
inline nets::NetworkConfig micro_net(nets::Framework fw = nets::Framework::cnf) {
  nets::NetworkConfig n;
  n.in_channels = geometry::kSynthChannels;
  n.num_classes = 4;
  n.framework = fw;
  n.nn_input = fw == nets::Framework::ncf ? nets::NnInput::labels : nets::NnInput::features;
  n.nn = {{2}, {1}, {8}, {2}, {1}, {8}, {2}};
  n.cn = {{2, 2}, {1, 1}, {8, 16}, {1, 2}, {1, 1}, {8, 8}, {1, 2}};
  n.ffm_depth = 1;
  n.ffm_channels = 8;
  n.ffm_heads = 2;
  n.patch_size = 16;
  n.mlp_ratio = 1;
  n.time_embed_dim = 8;
  n.grid_size = 0.25;
  return n;
}

inline training::PreparedScene scene(std::uint64_t seed, int points = 300, double voxel = 0.1) {
  geometry::SceneSpec spec;
  spec.num_points = points;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  return training::prepare_scene(geometry::synth_scene(spec, rng), voxel);
}

inline std::vector<training::PreparedScene> scenes(std::size_t n, std::uint64_t seed, int points = 300) {
  std::vector<training::PreparedScene> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(scene(seed * 1000 + i, points));
  return out;
}

}  // namespace cdseg::fixture
