#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "plseg/crf.hpp"
#include "plseg/phantom.hpp"
#include "plseg/progressive.hpp"
#include "plseg/siba_net.hpp"

namespace plseg {

/// Everything a run depends on. Serialized as JSON; every command writes the
/// resolved copy (config.json) next to its outputs.
struct RunConfig {
  std::uint64_t seed = 7;
  NetConfig net;
  CrfConfig crf;
  TrainSchedule schedule;
  PhantomRanges phantom;
  int n_train = 40;
  int n_test = 10;
  std::ptrdiff_t min_crop_px = kDefaultMinCropPx;
  bool predict_use_recist_label = false;  // offset 0 takes the given delineation instead of the model
  std::string data_dir;        // phantom-gen output
  std::string train_manifest;  // train input
  std::string test_manifest;   // predict / sweep input
  std::string output_dir;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// JSON mapping. Missing keys keep their defaults; unknown keys are rejected
// with FormatError so typos do not pass silently.
void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);
void to_json(nlohmann::json& j, const CrfConfig& c);
void from_json(const nlohmann::json& j, CrfConfig& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const TrainSchedule& c);
void from_json(const nlohmann::json& j, TrainSchedule& c);
void to_json(nlohmann::json& j, const Spacing3& c);
void from_json(const nlohmann::json& j, Spacing3& c);
void to_json(nlohmann::json& j, const PhantomSpec& c);
void from_json(const nlohmann::json& j, PhantomSpec& c);
void to_json(nlohmann::json& j, const PhantomRanges& c);
void from_json(const nlohmann::json& j, PhantomRanges& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

/// Sets one dotted key, e.g. "schedule.learning_rate" = "0.01". The value is
/// parsed as JSON when possible, otherwise taken as a string.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

/// PLSEG_SEED, when set, replaces the configured seed. Returns true if applied.
bool apply_seed_env(RunConfig& config);

/// Validates every sub-config.
void validate(const RunConfig& config);

}  // namespace plseg
