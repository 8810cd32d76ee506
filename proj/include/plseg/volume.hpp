#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plseg/axial_range.hpp"
#include "plseg/types.hpp"

namespace plseg {

enum class IntensityDomain { RawHu, Normalized };

/// CT volume with per-axis spacing. Voxel values are HU or [0,1] depending on domain.
struct CtVolume {
  Volume<float> voxels;
  Spacing3 spacing;
  IntensityDomain domain = IntensityDomain::RawHu;

  std::array<std::ptrdiff_t, 3> shape() const noexcept { return voxels.shape(); }
};

/// The only supervision for a lesion: one delineated axial slice.
struct LesionRecord {
  std::string id;
  std::string volume_path;
  std::ptrdiff_t recist_slice = 0;
  Mask2 recist_mask;
  std::optional<MaskVolume> gt_volume_mask;  // validation only
};

/// Throws unless the record is consistent with a volume of the given shape.
void validate_record(const LesionRecord& record, std::array<std::ptrdiff_t, 3> volume_shape);

/// Square in-plane ROI stack around a lesion. `slices[n]` is the crop of parent
/// slice `origin[0] + n`; pixels outside the parent volume are zero.
struct RoiCrop {
  std::vector<Image<float>> slices;
  std::array<std::ptrdiff_t, 3> origin{};  // (slice0, row0, col0) in the parent frame
  std::ptrdiff_t side_px = 0;
  std::ptrdiff_t recist_slice = 0;  // parent index of the RECIST slice

  std::ptrdiff_t first_offset() const noexcept { return origin[0] - recist_slice; }
  std::ptrdiff_t last_offset() const noexcept {
    return first_offset() + static_cast<std::ptrdiff_t>(slices.size()) - 1;
  }
  bool has_offset(std::ptrdiff_t offset) const noexcept {
    return offset >= first_offset() && offset <= last_offset();
  }
  const Image<float>& at_offset(std::ptrdiff_t offset) const;
};

inline constexpr std::ptrdiff_t kDefaultMinCropPx = 32;

/// clip(clip(HU + 1000, min 0) / 3000, max 1). Already-normalized input is
/// returned clipped to [0,1]. Non-finite voxels raise DataQualityError.
CtVolume normalize_intensity(const CtVolume& volume);
float normalize_hu(float hu) noexcept;

/// Edge length rule: max(min_edge, ceil(2 * longest in-plane diameter in pixels)).
std::ptrdiff_t crop_edge_px(const Mask2& recist_mask, double dy, double dx, std::ptrdiff_t min_edge);

/// Crop centre: the mask centroid, with .5 ties rounding toward the lower index.
std::array<std::ptrdiff_t, 2> crop_center(const Mask2& recist_mask);

/// Crops the lesion ROI over the given axial range. The square is fixed from the
/// RECIST slice and reused for every slice of the range.
RoiCrop crop_roi(const CtVolume& volume, const LesionRecord& record, const AxialRange& range,
                 std::ptrdiff_t min_edge = kDefaultMinCropPx);

/// crop_roi over the estimated axial range of the record.
RoiCrop crop_roi(const CtVolume& volume, const LesionRecord& record, std::ptrdiff_t min_edge = kDefaultMinCropPx);

/// Crops a 2D mask with the ROI's in-plane window (zero outside the parent).
Mask2 crop_mask(const Mask2& parent, const RoiCrop& roi);

/// Writes a crop-frame mask of the slice at `offset` back into a parent-frame volume.
/// Crop pixels that fall outside the parent are dropped.
void paste_to_parent(const Mask2& crop, const RoiCrop& roi, std::ptrdiff_t offset, MaskVolume& parent);

CtVolume load_volume(const std::filesystem::path& path);
void save_volume(const CtVolume& volume, const std::filesystem::path& path);
MaskVolume load_mask(const std::filesystem::path& path, Spacing3* spacing = nullptr);
Mask2 load_mask2d(const std::filesystem::path& path);
void save_mask(const MaskVolume& mask, const Spacing3& spacing, const std::filesystem::path& path);
void save_mask2d(const Mask2& mask, const Spacing3& spacing, const std::filesystem::path& path);

}  // namespace plseg
