#include "plseg/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace plseg {

using nlohmann::json;

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    try {
      ManifestEntry e;
      e.volume = resolve(j.at("volume").get<std::string>());
      e.recist_slice = j.at("recist_slice").get<std::ptrdiff_t>();
      e.recist_mask = resolve(j.at("recist_mask").get<std::string>());
      if (j.contains("gt_mask") && !j["gt_mask"].is_null()) e.gt_mask = resolve(j["gt_mask"].get<std::string>());
      e.id = j.contains("id") ? j["id"].get<std::string>() : e.volume.stem().string();
      if (!ids.insert(e.id).second) throw FormatError(where + ": duplicate lesion id " + e.id);
      if (e.recist_slice < 0) throw FormatError(where + ": negative recist_slice");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(base).generic_string(); };
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["volume"] = rel(e.volume);
    j["recist_slice"] = e.recist_slice;
    j["recist_mask"] = rel(e.recist_mask);
    if (e.gt_mask) j["gt_mask"] = rel(*e.gt_mask);
    out << j.dump() << '\n';
  }
}

LoadedLesion load_lesion(const ManifestEntry& entry, bool load_gt) {
  LoadedLesion l;
  l.volume = load_volume(entry.volume);
  l.record.id = entry.id;
  l.record.volume_path = entry.volume.string();
  l.record.recist_slice = entry.recist_slice;
  l.record.recist_mask = load_mask2d(entry.recist_mask);
  if (load_gt && entry.gt_mask) l.record.gt_volume_mask = load_mask(*entry.gt_mask);
  validate_record(l.record, l.volume.shape());
  return l;
}

}  // namespace plseg
