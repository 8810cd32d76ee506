#pragma once

#include <cstdint>
#include <filesystem>

#include "plseg/siba_net.hpp"

namespace plseg {

// A checkpoint is a directory holding
//   manifest.json  {"format": "plseg-checkpoint", "version": 1, "config": {...},
//                   "iteration": k, "seed": s, "dtype": "float64-le",
//                   "arrays": [{"name", "shape": [rows, cols], "offset", "count"}, ...]}
//   params.bin     concatenated little-endian float64 arrays (offsets in elements)
// Array names follow ModelParams::for_each, e.g. "backbone.conv0.weight" or
// "head.boundary.com.out.bias".

struct CheckpointInfo {
  NetConfig config;
  int iteration = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelParams<double>& params, int iteration,
                     std::uint64_t seed);

ModelParams<double> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

/// Weight-import hook: copies every "backbone.*" array of a checkpoint into
/// `params`. Shapes must match. Returns the number of arrays copied.
std::size_t import_backbone(ModelParams<double>& params, const std::filesystem::path& dir);

}  // namespace plseg
