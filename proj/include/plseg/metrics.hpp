#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plseg/types.hpp"

namespace plseg {

/// Overlap counts of a prediction A against a reference B (TN is not needed).
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;  // in A, not in B
  std::int64_t fn = 0;  // in B, not in A

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const Mask2& a, const Mask2& b);
ConfusionCounts confusion(const MaskVolume& a, const MaskVolume& b);

/// 2TP / (2TP + FN + FP); 1 when both masks are empty.
double dsc(const ConfusionCounts& c);
/// 1 - |FN - FP| / (2TP + FN + FP); 1 when both masks are empty.
double vs(const ConfusionCounts& c);

inline double dsc(const Mask2& a, const Mask2& b) { return dsc(confusion(a, b)); }
inline double dsc(const MaskVolume& a, const MaskVolume& b) { return dsc(confusion(a, b)); }
inline double vs(const MaskVolume& a, const MaskVolume& b) { return vs(confusion(a, b)); }

/// Squared Euclidean distance (mm^2) from every voxel centre to the nearest
/// foreground voxel centre; +inf everywhere for an empty mask. Separable
/// lower-envelope transform, exact for any spacing.
Volume<double> squared_distance_to_foreground(const MaskVolume& mask, const Spacing3& spacing);

/// Symmetric Hausdorff distance in mm between the foreground voxel centres of
/// two masks. Throws InvalidArgument if either mask is empty.
double hausdorff_mm(const MaskVolume& a, const MaskVolume& b, const Spacing3& spacing);

struct EvalRow {
  std::string lesion_id;
  double dsc = 0.0;
  double vs = 0.0;
  std::optional<double> hd_mm;  // missing when the prediction is empty
};

EvalRow evaluate(const std::string& lesion_id, const MaskVolume& pred, const MaskVolume& gt,
                 const Spacing3& spacing);

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single row).
struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct EvalReport {
  std::vector<EvalRow> rows;
  Summary dsc;
  Summary vs;
  Summary hd_mm;  // over rows with a defined distance
};

EvalReport aggregate(std::vector<EvalRow> rows);

/// Per-lesion CSV: lesion_id,dsc,vs,hd_mm (empty hd_mm when missing), then
/// mean and std rows.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

/// Fixed-precision formatting used by every report writer so that CSVs are
/// byte-stable across runs.
std::string format_number(double v);

}  // namespace plseg
