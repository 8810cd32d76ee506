#include "plseg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "plseg/mask_ops.hpp"

namespace plseg {

std::vector<LoadedLesion> load_dataset(const std::filesystem::path& manifest, bool load_gt) {
  std::vector<LoadedLesion> out;
  for (const auto& e : read_manifest(manifest)) out.push_back(load_lesion(e, load_gt));
  return out;
}

std::vector<LesionCase> prepare_cases(const std::vector<LoadedLesion>& lesions, std::ptrdiff_t min_edge) {
  std::vector<LesionCase> out;
  out.reserve(lesions.size());
  for (const auto& l : lesions) out.push_back(prepare_case(l.volume, l.record, min_edge));
  return out;
}

LesionSegmentation segment_lesion(const LesionCase& lesion, std::array<std::ptrdiff_t, 3> shape,
                                  const ModelParams<float>& params, const CrfConfig& crf, bool use_recist_label) {
  const BranchWeights<float> weights = prepare_branch_weights(params);
  LesionSegmentation seg;
  seg.id = lesion.id;
  std::map<std::ptrdiff_t, Mask2> predicted;
  for (std::ptrdiff_t off = lesion.range.lo; off <= lesion.range.hi; ++off) {
    const Image<float>& img = lesion.roi.at_offset(off);
    const Image<double> prob = predict_probability(img, params, weights);
    if (off == 0) seg.recist_raw = binarize(prob);
    if (off == 0 && use_recist_label) {
      predicted[off] = lesion.recist_label;
    } else {
      predicted[off] = binarize(refine(prob, img.cast<double>(), crf));
    }
  }
  seg.slices = assemble_slices(
      predicted, lesion.range, [&](std::ptrdiff_t off) -> Image<double> { return lesion.roi.at_offset(off).cast<double>(); },
      crf);
  seg.mask = assemble_volume(seg.slices, lesion.roi, shape);
  return seg;
}

ModelEvaluation evaluate_model(const std::vector<LoadedLesion>& test, const ModelParams<float>& params,
                               const CrfConfig& crf, std::ptrdiff_t min_edge, bool use_recist_label,
                               const std::filesystem::path& out_dir) {
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "masks");
    std::filesystem::create_directories(out_dir / "decisions");
  }
  ModelEvaluation ev;
  std::vector<EvalRow> rows;
  for (const auto& l : test) {
    if (!l.record.gt_volume_mask) throw InvalidArgument("evaluate_model: lesion " + l.record.id + " has no GT volume");
    const LesionCase c = prepare_case(l.volume, l.record, min_edge);
    const LesionSegmentation seg = segment_lesion(c, l.volume.shape(), params, crf, use_recist_label);
    rows.push_back(evaluate(l.record.id, seg.mask, *l.record.gt_volume_mask, l.volume.spacing));
    ev.recist_dsc.push_back(dsc(seg.recist_raw, c.recist_label));
    if (!out_dir.empty()) {
      save_mask(seg.mask, l.volume.spacing, out_dir / "masks" / (l.record.id + "_pred.nii"));
      write_decisions(out_dir / "decisions" / (l.record.id + ".jsonl"), l.record.id, seg.slices.decisions);
    }
  }
  ev.report = aggregate(std::move(rows));
  ev.recist = summarize(ev.recist_dsc);
  if (!out_dir.empty()) write_eval_csv(out_dir / "eval.csv", ev.report);
  return ev;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"max_offset", "n_branches", "scale_coefficient", "boundary_aware",
                                             "scale_invariant"};
  return axes;
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InvalidArgument("expected on/off, got '" + v + "'");
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw InvalidArgument("expected an integer, got '" + v + "'");
  return out;
}

}  // namespace

RunConfig apply_sweep_value(const RunConfig& base, const std::string& axis, const std::string& value) {
  RunConfig c = base;
  if (axis == "max_offset") {
    c.schedule.k_max = parse_int(value);
  } else if (axis == "n_branches") {
    c.net.n_branches = parse_int(value);
  } else if (axis == "scale_coefficient") {
    c.net.scale_coefficient = parse_int(value);
  } else if (axis == "boundary_aware") {
    c.net.boundary_aware = parse_bool(value);
  } else if (axis == "scale_invariant") {
    if (!parse_bool(value)) c.net.n_branches = 1;
  } else {
    throw InvalidArgument("unknown sweep axis: " + axis);
  }
  validate(c);
  return c;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                                const std::vector<LesionCase>& train, const std::vector<LoadedLesion>& test,
                                const LogFn& log) {
  if (values.empty()) throw InvalidArgument("sweep: no values");
  std::vector<SweepRow> rows;
  for (const auto& v : values) rows.push_back({axis, v, {}, apply_sweep_value(base, axis, v)});
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  ProgressiveOptions opts;
  opts.seed = base.seed;
  opts.log = log;
  if (axis == "max_offset") {
    int kmax = 0;
    for (const auto& r : rows) kmax = std::max(kmax, r.config.schedule.k_max);
    RunConfig shared = base;
    shared.schedule.k_max = kmax;
    say("sweep max_offset: one progressive run with k_max = " + std::to_string(kmax));
    const ProgressiveResult pr = run_progressive(train, init_params<float>(shared.net, shared.seed), shared.schedule,
                                                 shared.crf, opts);
    for (auto& r : rows) {
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(r.config.schedule.k_max), pr.snapshots.size() - 1);
      r.eval = evaluate_model(test, pr.snapshots[idx], r.config.crf, r.config.min_crop_px,
                              r.config.predict_use_recist_label);
      say("sweep max_offset=" + r.value + ": mean 3D DSC " + format_number(r.eval.report.dsc.mean));
    }
    return rows;
  }
  for (auto& r : rows) {
    say("sweep " + axis + "=" + r.value);
    const ProgressiveResult pr = run_progressive(train, init_params<float>(r.config.net, r.config.seed),
                                                 r.config.schedule, r.config.crf, opts);
    r.eval = evaluate_model(test, pr.final, r.config.crf, r.config.min_crop_px, r.config.predict_use_recist_label);
    say("sweep " + axis + "=" + r.value + ": mean 3D DSC " + format_number(r.eval.report.dsc.mean));
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "axis,axis_value,n,mean_dsc,std_dsc,mean_vs,mean_hd,mean_recist_dsc\n";
  for (const auto& r : rows) {
    const EvalReport& e = r.eval.report;
    out << r.axis << ',' << r.value << ',' << e.dsc.n << ',' << format_number(e.dsc.mean) << ','
        << format_number(e.dsc.std) << ',' << format_number(e.vs.mean) << ','
        << (e.hd_mm.n ? format_number(e.hd_mm.mean) : std::string()) << ',' << format_number(r.eval.recist.mean)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace plseg
