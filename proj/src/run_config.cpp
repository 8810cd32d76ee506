#include "plseg/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>

namespace plseg {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw FormatError(std::string(what) + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const NetConfig& c) {
  j = json{{"n_branches", c.n_branches},
           {"scale_coefficient", c.scale_coefficient},
           {"boundary_aware", c.boundary_aware},
           {"combined_boundary_head", c.combined_boundary_head},
           {"boundary_thickness_px", c.boundary_thickness_px},
           {"widths", c.widths},
           {"projection_channels", c.projection_channels},
           {"head_channels", c.head_channels},
           {"min_input_px", c.min_input_px}};
}

void from_json(const json& j, NetConfig& c) {
  check_keys(j,
             {"n_branches", "scale_coefficient", "boundary_aware", "combined_boundary_head", "boundary_thickness_px",
              "widths", "projection_channels", "head_channels", "min_input_px"},
             "net");
  read(j, "n_branches", c.n_branches);
  read(j, "scale_coefficient", c.scale_coefficient);
  read(j, "boundary_aware", c.boundary_aware);
  read(j, "combined_boundary_head", c.combined_boundary_head);
  read(j, "boundary_thickness_px", c.boundary_thickness_px);
  read(j, "widths", c.widths);
  read(j, "projection_channels", c.projection_channels);
  read(j, "head_channels", c.head_channels);
  read(j, "min_input_px", c.min_input_px);
}

void to_json(json& j, const CrfConfig& c) {
  j = json{{"n_iters", c.n_iters},         {"w_appearance", c.w_appearance}, {"w_smooth", c.w_smooth},
           {"theta_alpha", c.theta_alpha}, {"theta_beta", c.theta_beta},     {"theta_gamma", c.theta_gamma},
           {"prob_floor", c.prob_floor},   {"max_pixels", c.max_pixels}};
}

void from_json(const json& j, CrfConfig& c) {
  check_keys(j,
             {"n_iters", "w_appearance", "w_smooth", "theta_alpha", "theta_beta", "theta_gamma", "prob_floor",
              "max_pixels"},
             "crf");
  read(j, "n_iters", c.n_iters);
  read(j, "w_appearance", c.w_appearance);
  read(j, "w_smooth", c.w_smooth);
  read(j, "theta_alpha", c.theta_alpha);
  read(j, "theta_beta", c.theta_beta);
  read(j, "theta_gamma", c.theta_gamma);
  read(j, "prob_floor", c.prob_floor);
  read(j, "max_pixels", c.max_pixels);
}

void to_json(json& j, const LossWeights& c) { j = json{{"w_m", c.w_m}, {"w_b", c.w_b}, {"w_f", c.w_f}}; }

void from_json(const json& j, LossWeights& c) {
  check_keys(j, {"w_m", "w_b", "w_f"}, "loss");
  read(j, "w_m", c.w_m);
  read(j, "w_b", c.w_b);
  read(j, "w_f", c.w_f);
}

void to_json(json& j, const TrainSchedule& c) {
  j = json{{"k_max", c.k_max},
           {"epoch_cap", c.epoch_cap},
           {"plateau_window", c.plateau_window},
           {"plateau_tolerance", c.plateau_tolerance},
           {"optimizer", optimizer_name(c.optimizer)},
           {"learning_rate", c.learning_rate},
           {"lr_halving_epochs", c.lr_halving_epochs},
           {"momentum", c.momentum},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},
           {"batch_size", c.batch_size},
           {"augment_flips", c.augment_flips},
           {"loss", c.loss}};
}

void from_json(const json& j, TrainSchedule& c) {
  check_keys(j,
             {"k_max", "epoch_cap", "plateau_window", "plateau_tolerance", "optimizer", "learning_rate",
              "lr_halving_epochs", "momentum", "adam_beta1", "adam_beta2", "adam_eps", "batch_size", "augment_flips",
              "loss"},
             "schedule");
  read(j, "k_max", c.k_max);
  read(j, "epoch_cap", c.epoch_cap);
  read(j, "plateau_window", c.plateau_window);
  read(j, "plateau_tolerance", c.plateau_tolerance);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  read(j, "learning_rate", c.learning_rate);
  read(j, "lr_halving_epochs", c.lr_halving_epochs);
  read(j, "momentum", c.momentum);
  read(j, "adam_beta1", c.adam_beta1);
  read(j, "adam_beta2", c.adam_beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "batch_size", c.batch_size);
  read(j, "augment_flips", c.augment_flips);
  read(j, "loss", c.loss);
}

void to_json(json& j, const Spacing3& c) { j = json::array({c.dz, c.dy, c.dx}); }

void from_json(const json& j, Spacing3& c) {
  if (!j.is_array() || j.size() != 3) throw FormatError("spacing: expected [dz, dy, dx]");
  c = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(json& j, const PhantomSpec& c) {
  j = json{{"seed", c.seed},
           {"shape", c.shape},
           {"spacing", c.spacing},
           {"semi_axes_mm", c.semi_axes_mm},
           {"center_mm", c.center_mm},
           {"background_hu", c.background_hu},
           {"lesion_offset_hu", c.lesion_offset_hu},
           {"texture_amplitude_hu", c.texture_amplitude_hu},
           {"texture_wavelength_mm", c.texture_wavelength_mm},
           {"noise_sigma_hu", c.noise_sigma_hu}};
}

void from_json(const json& j, PhantomSpec& c) {
  check_keys(j,
             {"seed", "shape", "spacing", "semi_axes_mm", "center_mm", "background_hu", "lesion_offset_hu",
              "texture_amplitude_hu", "texture_wavelength_mm", "noise_sigma_hu"},
             "phantom");
  read(j, "seed", c.seed);
  read(j, "shape", c.shape);
  read(j, "spacing", c.spacing);
  read(j, "semi_axes_mm", c.semi_axes_mm);
  read(j, "center_mm", c.center_mm);
  read(j, "background_hu", c.background_hu);
  read(j, "lesion_offset_hu", c.lesion_offset_hu);
  read(j, "texture_amplitude_hu", c.texture_amplitude_hu);
  read(j, "texture_wavelength_mm", c.texture_wavelength_mm);
  read(j, "noise_sigma_hu", c.noise_sigma_hu);
}

void to_json(json& j, const PhantomRanges& c) {
  j = json{{"shape", c.shape},
           {"spacing", c.spacing},
           {"inplane_semi_axis_mm", c.inplane_semi_axis_mm},
           {"axial_ratio", c.axial_ratio},
           {"center_jitter_mm", c.center_jitter_mm},
           {"background_hu", c.intensity.background_hu},
           {"lesion_offset_hu", c.intensity.lesion_offset_hu},
           {"texture_amplitude_hu", c.intensity.texture_amplitude_hu},
           {"texture_wavelength_mm", c.intensity.texture_wavelength_mm},
           {"noise_sigma_hu", c.intensity.noise_sigma_hu}};
}

void from_json(const json& j, PhantomRanges& c) {
  check_keys(j,
             {"shape", "spacing", "inplane_semi_axis_mm", "axial_ratio", "center_jitter_mm", "background_hu",
              "lesion_offset_hu", "texture_amplitude_hu", "texture_wavelength_mm", "noise_sigma_hu"},
             "phantom");
  read(j, "shape", c.shape);
  read(j, "spacing", c.spacing);
  read(j, "inplane_semi_axis_mm", c.inplane_semi_axis_mm);
  read(j, "axial_ratio", c.axial_ratio);
  read(j, "center_jitter_mm", c.center_jitter_mm);
  read(j, "background_hu", c.intensity.background_hu);
  read(j, "lesion_offset_hu", c.intensity.lesion_offset_hu);
  read(j, "texture_amplitude_hu", c.intensity.texture_amplitude_hu);
  read(j, "texture_wavelength_mm", c.intensity.texture_wavelength_mm);
  read(j, "noise_sigma_hu", c.intensity.noise_sigma_hu);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"net", c.net},
           {"crf", c.crf},
           {"schedule", c.schedule},
           {"phantom", c.phantom},
           {"n_train", c.n_train},
           {"n_test", c.n_test},
           {"min_crop_px", c.min_crop_px},
           {"predict_use_recist_label", c.predict_use_recist_label},
           {"data_dir", c.data_dir},
           {"train_manifest", c.train_manifest},
           {"test_manifest", c.test_manifest},
           {"output_dir", c.output_dir}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j,
             {"seed", "net", "crf", "schedule", "phantom", "n_train", "n_test", "min_crop_px",
              "predict_use_recist_label", "data_dir", "train_manifest", "test_manifest", "output_dir"},
             "config");
  read(j, "seed", c.seed);
  read(j, "net", c.net);
  read(j, "crf", c.crf);
  read(j, "schedule", c.schedule);
  read(j, "phantom", c.phantom);
  read(j, "n_train", c.n_train);
  read(j, "n_test", c.n_test);
  read(j, "min_crop_px", c.min_crop_px);
  read(j, "predict_use_recist_label", c.predict_use_recist_label);
  read(j, "data_dir", c.data_dir);
  read(j, "train_manifest", c.train_manifest);
  read(j, "test_manifest", c.test_manifest);
  read(j, "output_dir", c.output_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json(config).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  if (key.empty()) throw InvalidArgument("override: empty key");
  json j = config;
  std::string pointer = "/" + key;
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  const json::json_pointer ptr(pointer);
  if (!j.contains(ptr)) throw InvalidArgument("override: unknown key '" + key + "'");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  j[ptr] = v;
  from_json(j, config);
}

bool apply_seed_env(RunConfig& config) {
  const char* s = std::getenv("PLSEG_SEED");
  if (!s || !*s) return false;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0') throw InvalidArgument(std::string("PLSEG_SEED is not an integer: ") + s);
  config.seed = v;
  return true;
}

void validate(const RunConfig& config) {
  config.net.validate();
  config.crf.validate();
  config.schedule.validate();
  config.phantom.validate();
  if (config.n_train < 0 || config.n_test < 0) throw InvalidArgument("n_train and n_test must be >= 0");
  if (config.min_crop_px < config.net.min_input_px) {
    throw InvalidArgument("min_crop_px must be at least net.min_input_px");
  }
}

}  // namespace plseg
