#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "plseg/manifest.hpp"
#include "plseg/metrics.hpp"
#include "plseg/postprocess.hpp"
#include "plseg/progressive.hpp"
#include "plseg/run_config.hpp"

namespace plseg {

using LogFn = std::function<void(const std::string&)>;

std::vector<LoadedLesion> load_dataset(const std::filesystem::path& manifest, bool load_gt);
std::vector<LesionCase> prepare_cases(const std::vector<LoadedLesion>& lesions, std::ptrdiff_t min_edge);

struct LesionSegmentation {
  std::string id;
  MaskVolume mask;  // parent frame
  AssembledSlices slices;
  Mask2 recist_raw;  // offset 0, network output binarized at 0.5 (no CRF), crop frame
};

/// Predicts every slice of the axial range (network, CRF, binarize), then
/// validates/repairs outward from offset 0 and pastes into the parent frame.
/// With `use_recist_label` the given delineation is used at offset 0.
LesionSegmentation segment_lesion(const LesionCase& lesion, std::array<std::ptrdiff_t, 3> shape,
                                  const ModelParams<float>& params, const CrfConfig& crf,
                                  bool use_recist_label = false);

struct ModelEvaluation {
  EvalReport report;              // 3D metrics against the GT volumes
  std::vector<double> recist_dsc; // per lesion, recist_raw vs the RECIST delineation
  Summary recist;
};

/// Segments and scores every test lesion (which must carry GT volumes). When
/// `out_dir` is non-empty, writes masks/<id>_pred.nii, decisions/<id>.jsonl and
/// eval.csv there.
ModelEvaluation evaluate_model(const std::vector<LoadedLesion>& test, const ModelParams<float>& params,
                               const CrfConfig& crf, std::ptrdiff_t min_edge, bool use_recist_label,
                               const std::filesystem::path& out_dir = {});

/// Sweep axes: max_offset, n_branches, scale_coefficient, boundary_aware, scale_invariant.
const std::vector<std::string>& sweep_axes();

/// Returns a copy of `base` with the axis set to `value`.
RunConfig apply_sweep_value(const RunConfig& base, const std::string& axis, const std::string& value);

struct SweepRow {
  std::string axis;
  std::string value;
  ModelEvaluation eval;
  RunConfig config;  // resolved config of this row
};

/// One full run (initialise, progressive training, evaluation) per value with
/// identical seeds. max_offset values share one progressive run: the model for
/// value v is the snapshot after iteration min(v, last), which is bit-identical
/// to a separate run with k_max = v.
std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                                const std::vector<LesionCase>& train, const std::vector<LoadedLesion>& test,
                                const LogFn& log = {});

/// Columns: axis,axis_value,n,mean_dsc,std_dsc,mean_vs,mean_hd,mean_recist_dsc.
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace plseg
