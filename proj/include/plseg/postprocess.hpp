#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "plseg/axial_range.hpp"
#include "plseg/crf.hpp"
#include "plseg/volume.hpp"

namespace plseg {

inline constexpr double kMinAreaRatio = 0.7;
inline constexpr double kMaxAreaRatio = 1.3;
inline constexpr double kRepairLow = 0.1;
inline constexpr double kRepairHigh = 0.9;

enum class Verdict { Accepted, Repaired, Dropped };
const char* verdict_name(Verdict v);

struct SliceDecision {
  std::ptrdiff_t offset = 0;
  Verdict verdict = Verdict::Accepted;
  double area_ratio = 0.0;  // area(new) / area(previous), before any repair
  std::string reason;
};

/// area(next) / area(prev); prev must be nonempty.
double area_ratio(const Mask2& prev, const Mask2& next);

/// Validity of a propagated slice: it touches the previous mask (overlap, or its
/// centroid pixel lies inside it) and its area ratio is within [0.7, 1.3].
/// An empty `next` is invalid.
bool validate_slice(const Mask2& prev, const Mask2& next);

/// Refines the previous mask, softened to {0.1, 0.9}, on the new image slice.
/// Falls back to `prev` when the refined mask is empty.
Mask2 repair_slice(const Mask2& prev, const Image<double>& image, const CrfConfig& crf);

struct AssembledSlices {
  std::map<std::ptrdiff_t, Mask2> slices;  // offset -> final crop-frame mask, every offset of the range
  std::vector<SliceDecision> decisions;    // one per nonzero offset, in processing order
};

/// Walks outward from offset 0 (first +1, +2, ..., then -1, -2, ...), validating
/// each predicted slice against the final mask of its inner neighbour and
/// repairing invalid ones. Offset 0 is taken verbatim. If a neighbour is empty
/// the remaining slices of that direction are dropped (left empty).
AssembledSlices assemble_slices(const std::map<std::ptrdiff_t, Mask2>& predicted, const AxialRange& range,
                                const std::function<Image<double>(std::ptrdiff_t)>& image_at,
                                const CrfConfig& crf);

/// Pastes assembled crop-frame slices into a zero volume of the parent shape.
MaskVolume assemble_volume(const AssembledSlices& slices, const RoiCrop& roi, std::array<std::ptrdiff_t, 3> shape);

/// Decision log as JSON lines: {"lesion_id", "offset", "verdict", "area_ratio", "reason"}.
void write_decisions(const std::filesystem::path& path, const std::string& lesion_id,
                     const std::vector<SliceDecision>& decisions);

}  // namespace plseg
