#include "plseg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "plseg/mask_ops.hpp"
#include "plseg/nifti.hpp"

namespace plseg {
namespace {
constexpr const char* kNormalizedTag = "plseg:normalized";
}

void validate_record(const LesionRecord& record, std::array<std::ptrdiff_t, 3> shape) {
  if (record.recist_slice < 0 || record.recist_slice >= shape[0]) {
    throw InvalidArgument("lesion " + record.id + ": RECIST slice " + std::to_string(record.recist_slice) +
                          " outside volume with " + std::to_string(shape[0]) + " slices");
  }
  if (record.recist_mask.rows() != shape[1] || record.recist_mask.cols() != shape[2]) {
    throw ShapeMismatch("lesion " + record.id + ": RECIST mask shape does not match the volume slice");
  }
  if (count_foreground(record.recist_mask) == 0) throw InvalidArgument("lesion " + record.id + ": empty RECIST mask");
  if (record.gt_volume_mask && record.gt_volume_mask->shape() != shape) {
    throw ShapeMismatch("lesion " + record.id + ": ground-truth volume shape does not match the image");
  }
}

const Image<float>& RoiCrop::at_offset(std::ptrdiff_t offset) const {
  if (!has_offset(offset)) throw InvalidArgument("offset " + std::to_string(offset) + " outside ROI stack");
  return slices[static_cast<std::size_t>(offset - first_offset())];
}

float normalize_hu(float hu) noexcept {
  const float shifted = std::max(hu + 1000.0f, 0.0f);
  return std::min(shifted / 3000.0f, 1.0f);
}

CtVolume normalize_intensity(const CtVolume& volume) {
  if (!volume.spacing.valid()) throw InvalidArgument("voxel spacing must be positive");
  CtVolume out{volume.voxels, volume.spacing, IntensityDomain::Normalized};
  for (auto& v : out.voxels.data()) {
    if (!std::isfinite(v)) throw DataQualityError("non-finite intensity in volume");
    v = volume.domain == IntensityDomain::Normalized ? std::clamp(v, 0.0f, 1.0f) : normalize_hu(v);
  }
  return out;
}

std::ptrdiff_t crop_edge_px(const Mask2& recist_mask, double dy, double dx, std::ptrdiff_t min_edge) {
  const double d_mm = max_diameter_mm(recist_mask, dy, dx);
  // Diameter in units of the finer in-plane axis so the square covers 2x in both directions.
  const double d_px = d_mm / std::min(dy, dx);
  const auto edge = static_cast<std::ptrdiff_t>(std::ceil(2.0 * d_px - 1e-9));
  return std::max(edge, min_edge);
}

std::array<std::ptrdiff_t, 2> crop_center(const Mask2& recist_mask) {
  const auto c = centroid_pixel(recist_mask);
  if (!c) throw InvalidArgument("crop_center: empty mask");
  return *c;
}

RoiCrop crop_roi(const CtVolume& volume, const LesionRecord& record, const AxialRange& range,
                 std::ptrdiff_t min_edge) {
  validate_record(record, volume.shape());
  if (min_edge < 1) throw InvalidArgument("minimum crop edge must be positive");
  if (!range.contains(0)) throw InvalidArgument("axial range must contain offset 0");

  RoiCrop roi;
  roi.side_px = crop_edge_px(record.recist_mask, volume.spacing.dy, volume.spacing.dx, min_edge);
  const auto center = crop_center(record.recist_mask);
  roi.recist_slice = record.recist_slice;
  roi.origin = {record.recist_slice + range.lo, center[0] - roi.side_px / 2, center[1] - roi.side_px / 2};

  const auto& vox = volume.voxels;
  for (std::ptrdiff_t off = range.lo; off <= range.hi; ++off) {
    const std::ptrdiff_t k = record.recist_slice + off;
    Image<float> crop = Image<float>::Zero(roi.side_px, roi.side_px);
    if (k >= 0 && k < vox.slices()) {
      for (std::ptrdiff_t r = 0; r < roi.side_px; ++r) {
        const std::ptrdiff_t i = roi.origin[1] + r;
        if (i < 0 || i >= vox.rows()) continue;
        for (std::ptrdiff_t c = 0; c < roi.side_px; ++c) {
          const std::ptrdiff_t j = roi.origin[2] + c;
          if (j >= 0 && j < vox.cols()) crop(r, c) = vox(k, i, j);
        }
      }
    }
    roi.slices.push_back(std::move(crop));
  }
  return roi;
}

RoiCrop crop_roi(const CtVolume& volume, const LesionRecord& record, std::ptrdiff_t min_edge) {
  return crop_roi(volume, record, estimate_axial_range(record, volume), min_edge);
}

Mask2 crop_mask(const Mask2& parent, const RoiCrop& roi) {
  Mask2 out = Mask2::Zero(roi.side_px, roi.side_px);
  for (std::ptrdiff_t r = 0; r < roi.side_px; ++r) {
    const std::ptrdiff_t i = roi.origin[1] + r;
    if (i < 0 || i >= parent.rows()) continue;
    for (std::ptrdiff_t c = 0; c < roi.side_px; ++c) {
      const std::ptrdiff_t j = roi.origin[2] + c;
      if (j >= 0 && j < parent.cols()) out(r, c) = parent(i, j);
    }
  }
  return out;
}

void paste_to_parent(const Mask2& crop, const RoiCrop& roi, std::ptrdiff_t offset, MaskVolume& parent) {
  if (crop.rows() != roi.side_px || crop.cols() != roi.side_px) throw ShapeMismatch("crop mask has wrong size");
  const std::ptrdiff_t k = roi.recist_slice + offset;
  if (k < 0 || k >= parent.slices()) throw InvalidArgument("paste_to_parent: slice outside the parent volume");
  for (std::ptrdiff_t r = 0; r < roi.side_px; ++r) {
    const std::ptrdiff_t i = roi.origin[1] + r;
    if (i < 0 || i >= parent.rows()) continue;
    for (std::ptrdiff_t c = 0; c < roi.side_px; ++c) {
      const std::ptrdiff_t j = roi.origin[2] + c;
      if (j >= 0 && j < parent.cols()) parent(k, i, j) = crop(r, c);
    }
  }
}

CtVolume load_volume(const std::filesystem::path& path) {
  nifti::Header header;
  CtVolume v;
  v.voxels = nifti::read_float(path, &header);
  v.spacing = header.spacing;
  v.domain = header.descrip == kNormalizedTag ? IntensityDomain::Normalized : IntensityDomain::RawHu;
  return v;
}

void save_volume(const CtVolume& volume, const std::filesystem::path& path) {
  nifti::write_float(path, volume.voxels, volume.spacing,
                     volume.domain == IntensityDomain::Normalized ? kNormalizedTag : "plseg:hu");
}

MaskVolume load_mask(const std::filesystem::path& path, Spacing3* spacing) {
  nifti::Header header;
  auto m = nifti::read_mask(path, &header);
  if (spacing) *spacing = header.spacing;
  return m;
}

Mask2 load_mask2d(const std::filesystem::path& path) {
  const MaskVolume m = load_mask(path);
  if (m.slices() != 1) throw FormatError(path.string() + ": expected a single-slice mask");
  return m.slice(0);
}

void save_mask(const MaskVolume& mask, const Spacing3& spacing, const std::filesystem::path& path) {
  nifti::write_mask(path, mask, spacing, "plseg:mask");
}

void save_mask2d(const Mask2& mask, const Spacing3& spacing, const std::filesystem::path& path) {
  MaskVolume m(1, mask.rows(), mask.cols());
  m.slice(0) = mask;
  save_mask(m, spacing, path);
}

}  // namespace plseg
