#include "plseg/postprocess.hpp"

#include <fstream>

#include <json.hpp>

#include "plseg/mask_ops.hpp"

namespace plseg {

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Accepted: return "accepted";
    case Verdict::Repaired: return "repaired";
    case Verdict::Dropped: return "dropped";
  }
  return "unknown";
}

double area_ratio(const Mask2& prev, const Mask2& next) {
  const auto a = count_foreground(prev);
  if (a == 0) throw InvalidArgument("area_ratio: previous mask is empty");
  return static_cast<double>(count_foreground(next)) / static_cast<double>(a);
}

namespace {

bool touches(const Mask2& prev, const Mask2& next) {
  if (((prev != 0) && (next != 0)).any()) return true;
  const auto c = centroid_pixel(next);
  return c && prev((*c)[0], (*c)[1]) != 0;
}

}  // namespace

bool validate_slice(const Mask2& prev, const Mask2& next) {
  if (prev.rows() != next.rows() || prev.cols() != next.cols()) throw ShapeMismatch("validate_slice: shapes differ");
  if (count_foreground(next) == 0) return false;
  const double r = area_ratio(prev, next);
  return touches(prev, next) && r >= kMinAreaRatio && r <= kMaxAreaRatio;
}

Mask2 repair_slice(const Mask2& prev, const Image<double>& image, const CrfConfig& crf) {
  if (count_foreground(prev) == 0) throw InvalidArgument("repair_slice: previous mask is empty");
  const Image<double> soft = (prev != 0).select(Image<double>::Constant(prev.rows(), prev.cols(), kRepairHigh),
                                                Image<double>::Constant(prev.rows(), prev.cols(), kRepairLow));
  Mask2 out = binarize(refine(soft, image, crf));
  if (count_foreground(out) == 0) return prev;
  return out;
}

AssembledSlices assemble_slices(const std::map<std::ptrdiff_t, Mask2>& predicted, const AxialRange& range,
                                const std::function<Image<double>(std::ptrdiff_t)>& image_at,
                                const CrfConfig& crf) {
  if (!range.contains(0)) throw InvalidArgument("assemble_slices: range must contain offset 0");
  const auto center = predicted.find(0);
  if (center == predicted.end()) throw InvalidArgument("assemble_slices: missing offset 0");
  AssembledSlices out;
  out.slices[0] = center->second;

  for (const int step : {+1, -1}) {
    const std::ptrdiff_t end = step > 0 ? range.hi : range.lo;
    for (std::ptrdiff_t off = step; step > 0 ? off <= end : off >= end; off += step) {
      const auto it = predicted.find(off);
      if (it == predicted.end()) throw InvalidArgument("assemble_slices: missing offset " + std::to_string(off));
      const Mask2& prev = out.slices.at(off - step);
      const Mask2& next = it->second;
      SliceDecision d;
      d.offset = off;
      if (count_foreground(prev) == 0) {
        d.verdict = Verdict::Dropped;
        d.reason = "previous slice empty";
        out.slices[off] = Mask2::Zero(next.rows(), next.cols());
      } else {
        d.area_ratio = area_ratio(prev, next);
        if (validate_slice(prev, next)) {
          d.verdict = Verdict::Accepted;
          d.reason = "valid";
          out.slices[off] = next;
        } else {
          d.verdict = Verdict::Repaired;
          if (count_foreground(next) == 0) {
            d.reason = "empty prediction";
          } else if (!touches(prev, next)) {
            d.reason = "no overlap with previous slice";
          } else {
            d.reason = "area ratio outside [0.7, 1.3]";
          }
          out.slices[off] = repair_slice(prev, image_at(off), crf);
        }
      }
      out.decisions.push_back(std::move(d));
    }
  }
  return out;
}

MaskVolume assemble_volume(const AssembledSlices& slices, const RoiCrop& roi, std::array<std::ptrdiff_t, 3> shape) {
  MaskVolume vol(shape[0], shape[1], shape[2]);
  for (const auto& [offset, mask] : slices.slices) paste_to_parent(mask, roi, offset, vol);
  return vol;
}

void write_decisions(const std::filesystem::path& path, const std::string& lesion_id,
                     const std::vector<SliceDecision>& decisions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : decisions) {
    nlohmann::ordered_json j{{"lesion_id", lesion_id},
                             {"offset", d.offset},
                             {"verdict", verdict_name(d.verdict)},
                             {"area_ratio", d.area_ratio},
                             {"reason", d.reason}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace plseg
