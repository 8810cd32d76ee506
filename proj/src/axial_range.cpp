#include "plseg/axial_range.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "plseg/mask_ops.hpp"
#include "plseg/volume.hpp"

namespace plseg {

double max_diameter_mm(const Mask2& mask, double dy, double dx) {
  if (!(dy > 0.0) || !(dx > 0.0)) throw InvalidArgument("in-plane spacing must be positive");
  const Mask2 boundary = derive_boundary(mask, 1);
  std::vector<std::array<double, 2>> pts;
  for (Eigen::Index i = 0; i < boundary.rows(); ++i) {
    for (Eigen::Index j = 0; j < boundary.cols(); ++j) {
      if (boundary(i, j)) pts.push_back({static_cast<double>(i) * dy, static_cast<double>(j) * dx});
    }
  }
  if (pts.empty()) throw InvalidArgument("max_diameter_mm: empty mask");
  double best = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      const double ry = pts[a][0] - pts[b][0];
      const double rx = pts[a][1] - pts[b][1];
      best = std::max(best, ry * ry + rx * rx);
    }
  }
  return std::sqrt(best);
}

std::ptrdiff_t axial_half_extent(double diameter_mm, double dz) {
  if (!(dz > 0.0)) throw InvalidArgument("slice thickness must be positive");
  if (!(diameter_mm >= 0.0)) throw InvalidArgument("diameter must be non-negative");
  // Tolerance only absorbs representation error of 0.8 (e.g. 0.8 * 15 / 3).
  return static_cast<std::ptrdiff_t>(std::floor(0.8 * diameter_mm / dz + 1e-9));
}

AxialRange make_axial_range(std::ptrdiff_t half_extent, std::ptrdiff_t recist_slice, std::ptrdiff_t n_slices,
                            std::string lesion_id) {
  if (recist_slice < 0 || recist_slice >= n_slices) throw InvalidArgument("RECIST slice outside the volume");
  AxialRange r;
  r.lesion_id = std::move(lesion_id);
  r.half_extent = half_extent;
  r.lo = std::max(-half_extent, -recist_slice);
  r.hi = std::min(half_extent, n_slices - 1 - recist_slice);
  return r;
}

AxialRange estimate_axial_range(const LesionRecord& record, const CtVolume& volume) {
  validate_record(record, volume.shape());
  const double d = max_diameter_mm(record.recist_mask, volume.spacing.dy, volume.spacing.dx);
  return make_axial_range(axial_half_extent(d, volume.spacing.dz), record.recist_slice, volume.voxels.slices(),
                          record.id);
}

}  // namespace plseg
