#include "plseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "plseg/run_config.hpp"

namespace plseg {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void save_checkpoint(const std::filesystem::path& dir, const ModelParams<double>& params, int iteration,
                     std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json arrays = json::array();
  std::vector<double> blob;
  params.for_each([&](const std::string& name, const auto& t) {
    arrays.push_back({{"name", name},
                      {"shape", {t.rows(), t.cols()}},
                      {"offset", blob.size()},
                      {"count", t.size()}});
    blob.insert(blob.end(), t.data(), t.data() + t.size());
  });
  const json manifest{{"format", "plseg-checkpoint"}, {"version", 1},       {"config", params.config},
                      {"iteration", iteration},       {"seed", seed},       {"dtype", "float64-le"},
                      {"arrays", arrays}};
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + (dir / "params.bin").string());
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

namespace {

struct ArrayEntry {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
};

struct RawCheckpoint {
  json manifest;
  std::map<std::string, ArrayEntry> arrays;
  std::vector<double> blob;
};

RawCheckpoint read_raw(const std::filesystem::path& dir) {
  RawCheckpoint raw;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  try {
    raw.manifest = json::parse(in);
    if (raw.manifest.at("format") != "plseg-checkpoint") throw FormatError("not a plseg checkpoint");
    if (raw.manifest.at("version") != 1) throw FormatError("unsupported checkpoint version");
    if (raw.manifest.at("dtype") != "float64-le") throw FormatError("unsupported checkpoint dtype");
    for (const auto& a : raw.manifest.at("arrays")) {
      ArrayEntry e{a.at("shape").at(0).get<Eigen::Index>(), a.at("shape").at(1).get<Eigen::Index>(),
                   a.at("offset").get<std::size_t>()};
      if (a.at("count").get<Eigen::Index>() != e.rows * e.cols) throw FormatError("array count/shape mismatch");
      raw.arrays[a.at("name").get<std::string>()] = e;
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot open " + (dir / "params.bin").string());
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes % sizeof(double) != 0) throw FormatError("params.bin size is not a multiple of 8");
  raw.blob.resize(bytes / sizeof(double));
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(raw.blob.data()), static_cast<std::streamsize>(bytes));
  if (!bin) throw IoError("read failed: " + (dir / "params.bin").string());
  return raw;
}

template <typename T>
void copy_array(const RawCheckpoint& raw, const std::string& name, T& t) {
  const auto it = raw.arrays.find(name);
  if (it == raw.arrays.end()) throw FormatError("checkpoint lacks array " + name);
  const ArrayEntry& e = it->second;
  if (e.rows != t.rows() || e.cols != t.cols()) {
    throw ShapeMismatch("checkpoint array " + name + " has shape " + std::to_string(e.rows) + "x" +
                        std::to_string(e.cols) + ", expected " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
  }
  if (e.offset + static_cast<std::size_t>(t.size()) > raw.blob.size()) {
    throw FormatError("checkpoint array " + name + " runs past params.bin");
  }
  std::memcpy(t.data(), raw.blob.data() + e.offset, static_cast<std::size_t>(t.size()) * sizeof(double));
}

}  // namespace

ModelParams<double> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  const RawCheckpoint raw = read_raw(dir);
  NetConfig config;
  try {
    config = raw.manifest.at("config").get<NetConfig>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint config: " + std::string(e.what()));
  }
  config.validate();
  ModelParams<double> params = ModelParams<double>::zeros(config);
  std::size_t used = 0;
  params.for_each([&](const std::string& name, auto& t) {
    copy_array(raw, name, t);
    ++used;
  });
  if (used != raw.arrays.size()) throw FormatError("checkpoint holds arrays the configuration does not use");
  if (info) {
    info->config = config;
    info->iteration = raw.manifest.value("iteration", 0);
    info->seed = raw.manifest.value("seed", std::uint64_t{0});
  }
  return params;
}

std::size_t import_backbone(ModelParams<double>& params, const std::filesystem::path& dir) {
  const RawCheckpoint raw = read_raw(dir);
  std::size_t copied = 0;
  params.for_each([&](const std::string& name, auto& t) {
    if (name.rfind("backbone.", 0) != 0) return;
    copy_array(raw, name, t);
    ++copied;
  });
  return copied;
}

}  // namespace plseg
