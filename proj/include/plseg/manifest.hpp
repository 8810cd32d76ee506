#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plseg/volume.hpp"

namespace plseg {

/// One line of a lesion manifest (JSON-lines):
///   {"id": "...", "volume": "...", "recist_slice": 12, "recist_mask": "...", "gt_mask": "..."}
/// `id` and `gt_mask` are optional. Relative paths resolve against the manifest's directory.
/// Indices are zero-based.
struct ManifestEntry {
  std::string id;
  std::filesystem::path volume;
  std::ptrdiff_t recist_slice = 0;
  std::filesystem::path recist_mask;
  std::optional<std::filesystem::path> gt_mask;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Writes entries with paths relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct LoadedLesion {
  CtVolume volume;  // as stored (raw HU unless tagged normalized)
  LesionRecord record;
};

LoadedLesion load_lesion(const ManifestEntry& entry, bool load_gt = true);

}  // namespace plseg
