#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "doctest.h"
#include "plseg/checkpoint.hpp"
#include "plseg/manifest.hpp"
#include "plseg/overlay.hpp"
#include "plseg/run_config.hpp"
#include "test_util.hpp"

using namespace plseg;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = 0;
  std::string err;
};

CliResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(PLSEG_CLI_PATH) + " " + args + " 2> " + err.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(err)};
}

nlohmann::json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line[0] == '{') last = line;
  return nlohmann::json::parse(last);
}

/// Small end-to-end config: a handful of phantoms and a narrow network.
RunConfig tiny_config() {
  RunConfig c;
  c.seed = 3;
  c.n_train = 3;
  c.n_test = 2;
  c.net.widths = {4, 6, 8};
  c.net.projection_channels = 3;
  c.net.head_channels = 3;
  c.schedule.k_max = 1;
  c.schedule.epoch_cap = 2;
  c.schedule.batch_size = 2;
  c.schedule.optimizer = Optimizer::Adam;
  c.schedule.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("run config survives a JSON round trip") {
  testutil::TempDir dir;
  RunConfig c = tiny_config();
  c.crf.theta_beta = 0.05;
  c.phantom.spacing = {2.5, 0.8, 0.8};
  c.output_dir = "somewhere";
  save_run_config(c, dir / "c.json");
  CHECK(load_run_config(dir / "c.json") == c);
}

TEST_CASE("partial configs keep defaults and unknown keys are rejected") {
  testutil::TempDir dir;
  std::ofstream(dir / "p.json") << R"({"seed": 11, "schedule": {"k_max": 2}})";
  const RunConfig c = load_run_config(dir / "p.json");
  CHECK(c.seed == 11);
  CHECK(c.schedule.k_max == 2);
  CHECK(c.schedule.epoch_cap == TrainSchedule{}.epoch_cap);
  CHECK(c.crf == CrfConfig{});
  std::ofstream(dir / "bad.json") << R"({"schedule": {"kmax": 2}})";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), FormatError);
}

TEST_CASE("dotted overrides and the seed environment variable") {
  RunConfig c;
  apply_override(c, "schedule.learning_rate", "0.01");
  CHECK(c.schedule.learning_rate == 0.01);
  apply_override(c, "schedule.optimizer", "adam");
  CHECK(c.schedule.optimizer == Optimizer::Adam);
  apply_override(c, "net.widths", "[8,16,32]");
  CHECK(c.net.widths == std::array<int, 3>{8, 16, 32});
  CHECK_THROWS_AS(apply_override(c, "schedule.nope", "1"), InvalidArgument);

  ::setenv("PLSEG_SEED", "99", 1);
  CHECK(apply_seed_env(c));
  CHECK(c.seed == 99);
  ::setenv("PLSEG_SEED", "x1", 1);
  CHECK_THROWS_AS(apply_seed_env(c), InvalidArgument);
  ::unsetenv("PLSEG_SEED");
  CHECK(!apply_seed_env(c));
}

TEST_CASE("checkpoints round trip exactly and are strict on load") {
  testutil::TempDir dir;
  NetConfig net;
  net.widths = {4, 6, 8};
  const ModelParams<double> p = init_params<double>(net, 5);
  save_checkpoint(dir / "ck", p, 2, 77);
  CheckpointInfo info;
  const ModelParams<double> q = load_checkpoint(dir / "ck", &info);
  CHECK(q.flatten() == p.flatten());
  CHECK(info.iteration == 2);
  CHECK(info.seed == 77);
  CHECK(info.config == net);
  const auto manifest = nlohmann::json::parse(read_text(dir / "ck" / "manifest.json"));
  CHECK(manifest.at("format") == "plseg-checkpoint");
  CHECK(manifest.at("arrays").at(0).at("name") == "backbone.conv0.weight");

  // Backbone import into a model with different heads.
  NetConfig other = net;
  other.boundary_aware = false;
  ModelParams<double> r = init_params<double>(other, 6);
  CHECK(import_backbone(r, dir / "ck") == 12);
  CHECK(r.conv_w[3] == p.conv_w[3]);

  // A truncated payload is rejected.
  std::filesystem::resize_file(dir / "ck" / "params.bin", 16);
  CHECK_THROWS(load_checkpoint(dir / "ck"));
}

TEST_CASE("overlay PNGs draw prediction green and reference red") {
  testutil::TempDir dir;
  Image<float> slice = Image<float>::Constant(8, 8, 0.5f);
  Mask2 pred = Mask2::Zero(8, 8), ref = Mask2::Zero(8, 8);
  pred.block(1, 1, 3, 3).setOnes();
  ref.block(4, 4, 3, 3).setOnes();
  const RgbImage img = render_overlay(slice, pred, &ref, 2);
  CHECK(img.width == 16);
  write_png(img, dir / "o.png");
  const RgbImage back = read_png(dir / "o.png");
  CHECK(back.pixels == img.pixels);
  const std::uint8_t* g = back.at(2, 2);  // pixel (1, 1): prediction contour
  CHECK((g[0] == 0 && g[1] == 255 && g[2] == 0));
  const std::uint8_t* r = back.at(8, 8);  // pixel (4, 4): reference contour
  CHECK((r[0] == 255 && r[1] == 0 && r[2] == 0));
  const std::uint8_t* bg = back.at(0, 0);
  CHECK((bg[0] == bg[1] && bg[1] == bg[2]));
}

TEST_CASE("cli reports errors as JSON records") {
  testutil::TempDir dir;
  const CliResult usage = run_cli("train --bogus", dir.path());
  CHECK(usage.code == 2);
  CHECK(last_json_line(usage.err).at("error") == "usage");

  const CliResult missing = run_cli("predict --checkpoint " + (dir / "nope").string() + " -q", dir.path());
  CHECK(missing.code == 1);
  const auto j = last_json_line(missing.err);
  CHECK(j.at("command") == "predict");
  CHECK(j.contains("message"));
}

TEST_CASE("cli pipeline: phantoms, training, prediction and evaluation") {
  testutil::TempDir dir;
  save_run_config(tiny_config(), dir / "tiny.json");
  const std::string cfg = "-q -c " + (dir / "tiny.json").string();
  REQUIRE(run_cli("phantom-gen " + cfg + " -o " + (dir / "data").string(), dir.path()).code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "config.json"));
  REQUIRE(run_cli("train " + cfg + " -m " + (dir / "data" / "train.jsonl").string() + " -o " +
                      (dir / "train").string(),
                  dir.path())
              .code == 0);
  CHECK(std::filesystem::exists(dir / "train" / "config.json"));
  CHECK(std::filesystem::exists(dir / "train" / "checkpoints" / "iter_0" / "manifest.json"));
  CHECK(read_text(dir / "train" / "run_report.csv").rfind("iteration,samples_added,total_samples,mean_loss,wall_time_s", 0) ==
        0);
  REQUIRE(run_cli("predict " + cfg + " --checkpoint " + (dir / "train" / "model").string() + " -m " +
                      (dir / "data" / "test.jsonl").string() + " -o " + (dir / "pred").string(),
                  dir.path())
              .code == 0);
  CHECK(std::filesystem::exists(dir / "pred" / "eval.csv"));
  CHECK(std::filesystem::exists(dir / "pred" / "config.json"));

  // Ground truth scored against itself gives a DSC column of ones.
  std::filesystem::create_directories(dir / "gtpred");
  for (const auto& e : read_manifest(dir / "data" / "test.jsonl"))
    std::filesystem::copy_file(*e.gt_mask, dir / "gtpred" / (e.id + "_pred.nii"));
  REQUIRE(run_cli("evaluate -q --pred-dir " + (dir / "gtpred").string() + " --gt-manifest " +
                      (dir / "data" / "test.jsonl").string(),
                  dir.path())
              .code == 0);
  std::istringstream csv(read_text(dir / "gtpred" / "eval.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("std,", 0) == 0) continue;
    CHECK(line.substr(line.find(',') + 1, 8) == "1.000000");
    ++rows;
  }
  CHECK(rows == 3);  // two lesions plus the mean row

  const auto first = read_manifest(dir / "data" / "test.jsonl")[0];
  REQUIRE(run_cli("overlay -q --volume " + first.volume.string() + " --mask " +
                      (dir / "pred" / "masks" / (first.id + "_pred.nii")).string() + " --gt " +
                      first.gt_mask->string() + " -o " + (dir / "ov").string(),
                  dir.path())
              .code == 0);
  CHECK(std::filesystem::exists(dir / "ov" / "config.json"));
}
