// plseg: command-line entry point. Every subcommand writes its resolved
// config.json next to its outputs; failures print one JSON error record on
// stderr and exit nonzero.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plseg/checkpoint.hpp"
#include "plseg/overlay.hpp"
#include "plseg/pipeline.hpp"
#include "plseg/run_config.hpp"

namespace fs = std::filesystem;
using namespace plseg;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

RunConfig resolve(const Common& common) {
  RunConfig cfg = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  apply_seed_env(cfg);
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) cfg.seed = *common.seed;
  return cfg;
}

LogFn make_log(const Common& common) {
  if (common.quiet) return {};
  return [](const std::string& msg) { std::cerr << "[plseg] " << msg << std::endl; };
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw InvalidArgument(std::string("missing ") + what);
}

void cmd_phantom_gen(RunConfig cfg, const LogFn& log) {
  require(cfg.data_dir, "data_dir (--out)");
  validate(cfg);
  fs::create_directories(cfg.data_dir);
  const PhantomDataset ds = make_dataset(cfg.n_train, cfg.n_test, cfg.phantom, cfg.seed, cfg.data_dir);
  cfg.train_manifest = ds.train_manifest.string();
  cfg.test_manifest = ds.test_manifest.string();
  save_run_config(cfg, fs::path(cfg.data_dir) / "config.json");
  if (log) log("wrote " + std::to_string(ds.seeds.size()) + " phantoms to " + cfg.data_dir);
}

fs::path cmd_train(const RunConfig& cfg, const std::string& init_backbone, const LogFn& log) {
  require(cfg.train_manifest, "train_manifest");
  require(cfg.output_dir, "output_dir (--out)");
  validate(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  save_run_config(cfg, out / "config.json");

  const auto lesions = load_dataset(cfg.train_manifest, false);
  const auto cases = prepare_cases(lesions, cfg.min_crop_px);
  ModelParams<float> theta0 = init_params<float>(cfg.net, cfg.seed);
  if (!init_backbone.empty()) {
    ModelParams<double> p = theta0.cast<double>();
    const std::size_t n = import_backbone(p, init_backbone);
    theta0 = p.cast<float>();
    if (log) log("imported " + std::to_string(n) + " backbone arrays from " + init_backbone);
  }
  ProgressiveOptions opts;
  opts.seed = cfg.seed;
  opts.checkpoint_dir = out / "checkpoints";
  opts.log = log;
  const ProgressiveResult res = run_progressive(cases, theta0, cfg.schedule, cfg.crf, opts);
  write_run_report(out / "run_report.csv", res.iterations);
  const int last = res.iterations.back().k;
  save_checkpoint(out / "model", res.final.cast<double>(), last, cfg.seed);

  std::ofstream ev(out / "expansion.jsonl");
  for (const auto& e : res.events) {
    nlohmann::ordered_json j{{"lesion_id", e.lesion_id}, {"offset", e.offset}, {"status", expansion_status_name(e.status)}};
    ev << j.dump() << '\n';
  }
  return out / "model";
}

void cmd_predict(RunConfig cfg, const std::string& checkpoint, const LogFn& log) {
  require(checkpoint, "--checkpoint");
  require(cfg.test_manifest, "test_manifest (--manifest)");
  require(cfg.output_dir, "output_dir (--out)");
  CheckpointInfo info;
  const ModelParams<float> params = load_checkpoint(checkpoint, &info).cast<float>();
  cfg.net = info.config;
  validate(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out / "masks");
  fs::create_directories(out / "decisions");
  save_run_config(cfg, out / "config.json");

  const auto entries = read_manifest(cfg.test_manifest);
  std::vector<EvalRow> rows;
  std::vector<double> recist;
  for (const auto& e : entries) {
    const LoadedLesion l = load_lesion(e, true);
    const LesionCase c = prepare_case(l.volume, l.record, cfg.min_crop_px);
    const LesionSegmentation seg = segment_lesion(c, l.volume.shape(), params, cfg.crf, cfg.predict_use_recist_label);
    save_mask(seg.mask, l.volume.spacing, out / "masks" / (l.record.id + "_pred.nii"));
    write_decisions(out / "decisions" / (l.record.id + ".jsonl"), l.record.id, seg.slices.decisions);
    if (l.record.gt_volume_mask) {
      rows.push_back(evaluate(l.record.id, seg.mask, *l.record.gt_volume_mask, l.volume.spacing));
      recist.push_back(dsc(seg.recist_raw, c.recist_label));
    }
    if (log) log("segmented " + l.record.id);
  }
  if (!rows.empty()) {
    const EvalReport rep = aggregate(std::move(rows));
    write_eval_csv(out / "eval.csv", rep);
    if (log) {
      log("mean 3D DSC " + format_number(rep.dsc.mean) + ", mean RECIST-slice DSC " +
          format_number(summarize(recist).mean));
    }
  }
}

void cmd_evaluate(const std::string& pred_dir, const std::string& gt_manifest, const std::string& out_csv,
                  const LogFn& log) {
  require(pred_dir, "--pred-dir");
  require(gt_manifest, "--gt-manifest");
  std::vector<EvalRow> rows;
  for (const auto& e : read_manifest(gt_manifest)) {
    if (!e.gt_mask) throw InvalidArgument("manifest entry " + e.id + " has no gt_mask");
    Spacing3 spacing;
    const MaskVolume gt = load_mask(*e.gt_mask, &spacing);
    fs::path p = fs::path(pred_dir) / "masks" / (e.id + "_pred.nii");
    if (!fs::exists(p)) p = fs::path(pred_dir) / (e.id + "_pred.nii");
    rows.push_back(evaluate(e.id, load_mask(p), gt, spacing));
  }
  const EvalReport rep = aggregate(std::move(rows));
  const fs::path out = out_csv.empty() ? fs::path(pred_dir) / "eval.csv" : fs::path(out_csv);
  write_eval_csv(out, rep);
  if (log) log("wrote " + out.string() + " (mean DSC " + format_number(rep.dsc.mean) + ")");
}

void cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::vector<std::string>& values,
               const LogFn& log) {
  require(cfg.train_manifest, "train_manifest");
  require(cfg.test_manifest, "test_manifest");
  require(cfg.output_dir, "output_dir (--out)");
  validate(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  save_run_config(cfg, out / "config.json");
  const auto train = prepare_cases(load_dataset(cfg.train_manifest, false), cfg.min_crop_px);
  const auto test = load_dataset(cfg.test_manifest, true);
  const auto rows = run_sweep(cfg, axis, values, train, test, log);
  write_sweep_csv(out / "sweep.csv", rows);
  nlohmann::json snapshots = nlohmann::json::array();
  for (const auto& r : rows) snapshots.push_back({{"axis_value", r.value}, {"config", r.config}});
  std::ofstream(out / "sweep_configs.json") << snapshots.dump(2) << '\n';
}

void cmd_overlay(const std::string& volume, const std::string& mask, const std::string& gt, const std::string& out,
                 int scale, bool all_slices, const LogFn& log) {
  require(volume, "--volume");
  require(mask, "--mask");
  require(out, "--out");
  const CtVolume v = load_volume(volume);
  const MaskVolume m = load_mask(mask);
  std::optional<MaskVolume> g;
  if (!gt.empty()) g = load_mask(gt);
  const auto files = write_overlays(v, m, g ? &*g : nullptr, out, {scale, !all_slices});
  if (log) log("wrote " + std::to_string(files.size()) + " overlay images to " + out);
}

void cmd_run(RunConfig cfg, const LogFn& log) {
  require(cfg.output_dir, "output_dir (--out)");
  const fs::path out = cfg.output_dir;
  cfg.data_dir = (out / "data").string();
  cmd_phantom_gen(cfg, log);
  cfg.train_manifest = (out / "data" / "train.jsonl").string();
  cfg.test_manifest = (out / "data" / "test.jsonl").string();
  RunConfig train_cfg = cfg;
  train_cfg.output_dir = (out / "train").string();
  const fs::path model = cmd_train(train_cfg, "", log);
  RunConfig pred_cfg = cfg;
  pred_cfg.output_dir = (out / "predict").string();
  cmd_predict(pred_cfg, model.string(), log);
  save_run_config(cfg, out / "config.json");
}

void print_error(const std::string& command, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j{{"error", kind}, {"command", command}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive lesion segmentation from single-slice delineations"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config_path, "JSON run config");
  app.add_option("--set", common.overrides, "Override a config key, e.g. --set schedule.epoch_cap=50");
  app.add_option("--seed", common.seed, "Seed (overrides config and PLSEG_SEED)");
  app.add_flag("-q,--quiet", common.quiet, "No progress output");

  std::string out, manifest, checkpoint, init_backbone, pred_dir, gt_manifest, eval_out, axis, volume, mask, gt;
  std::vector<std::string> values;
  int n_train = -1, n_test = -1, scale = 4;
  bool all_slices = false;

  auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic phantom dataset");
  gen->add_option("-o,--out", out, "Output directory");
  gen->add_option("--n-train", n_train, "Number of training phantoms");
  gen->add_option("--n-test", n_test, "Number of test phantoms");

  auto* train = app.add_subcommand("train", "Progressive training");
  train->add_option("-m,--manifest", manifest, "Training manifest (JSON lines)");
  train->add_option("-o,--out", out, "Output directory");
  train->add_option("--init-backbone", init_backbone, "Checkpoint to import backbone weights from");

  auto* predict = app.add_subcommand("predict", "Segment lesions in 3D");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  predict->add_option("-m,--manifest", manifest, "Lesion manifest");
  predict->add_option("-o,--out", out, "Output directory");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  evaluate_cmd->add_option("--pred-dir", pred_dir, "Directory written by predict")->required();
  evaluate_cmd->add_option("--gt-manifest", gt_manifest, "Manifest with gt_mask entries")->required();
  evaluate_cmd->add_option("-o,--out", eval_out, "Output CSV (default <pred-dir>/eval.csv)");

  auto* sweep = app.add_subcommand("sweep", "Hyper-parameter / ablation sweep");
  sweep->add_option("--axis", axis, "max_offset | n_branches | scale_coefficient | boundary_aware | scale_invariant")
      ->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  sweep->add_option("-o,--out", out, "Output directory");

  auto* overlay = app.add_subcommand("overlay", "Per-slice contour overlays (PNG)");
  overlay->add_option("--volume", volume, "CT volume (NIfTI)")->required();
  overlay->add_option("--mask", mask, "Predicted mask (green)")->required();
  overlay->add_option("--gt", gt, "Reference mask (red)");
  overlay->add_option("-o,--out", out, "Output directory")->required();
  overlay->add_option("--scale", scale, "Pixel magnification");
  overlay->add_flag("--all-slices", all_slices, "Also write slices without foreground");

  auto* run = app.add_subcommand("run", "phantom-gen, train and predict into one directory");
  run->add_option("-o,--out", out, "Output directory");

  std::string command = "plseg";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "usage", e.what());
    return 2;
  }

  try {
    const LogFn log = make_log(common);
    if (gen->parsed()) {
      command = "phantom-gen";
      RunConfig cfg = resolve(common);
      if (!out.empty()) cfg.data_dir = out;
      if (n_train >= 0) cfg.n_train = n_train;
      if (n_test >= 0) cfg.n_test = n_test;
      cmd_phantom_gen(cfg, log);
    } else if (train->parsed()) {
      command = "train";
      RunConfig cfg = resolve(common);
      if (!manifest.empty()) cfg.train_manifest = manifest;
      if (!out.empty()) cfg.output_dir = out;
      cmd_train(cfg, init_backbone, log);
    } else if (predict->parsed()) {
      command = "predict";
      RunConfig cfg = resolve(common);
      if (!manifest.empty()) cfg.test_manifest = manifest;
      if (!out.empty()) cfg.output_dir = out;
      cmd_predict(cfg, checkpoint, log);
    } else if (evaluate_cmd->parsed()) {
      command = "evaluate";
      const RunConfig cfg = resolve(common);
      cmd_evaluate(pred_dir, gt_manifest, eval_out, log);
      const fs::path dir = eval_out.empty() ? fs::path(pred_dir) : fs::absolute(eval_out).parent_path();
      if (!fs::exists(dir / "config.json")) save_run_config(cfg, dir / "config.json");
    } else if (sweep->parsed()) {
      command = "sweep";
      RunConfig cfg = resolve(common);
      if (!out.empty()) cfg.output_dir = out;
      cmd_sweep(cfg, axis, values, log);
    } else if (overlay->parsed()) {
      command = "overlay";
      const RunConfig cfg = resolve(common);
      cmd_overlay(volume, mask, gt, out, scale, all_slices, log);
      save_run_config(cfg, fs::path(out) / "config.json");
    } else if (run->parsed()) {
      command = "run";
      RunConfig cfg = resolve(common);
      if (!out.empty()) cfg.output_dir = out;
      cmd_run(cfg, log);
    }
  } catch (const plseg::Error& e) {
    print_error(command, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(command, "internal", e.what());
    return 1;
  }
  return 0;
}
