#include "plseg/mask_ops.hpp"

#include <cmath>

namespace plseg {

Mask2 erode(const Mask2& mask, int radius) {
  if (radius < 0) throw InvalidArgument("erosion radius must be non-negative");
  const auto rows = mask.rows();
  const auto cols = mask.cols();
  if (radius == 0) return mask;

  // Separable: a square element erodes rows then columns.
  Mask2 horiz = Mask2::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (j - radius < 0 || j + radius >= cols) continue;
      bool all = true;
      for (Eigen::Index t = j - radius; t <= j + radius && all; ++t) all = mask(i, t) != 0;
      horiz(i, j) = all ? 1 : 0;
    }
  }
  Mask2 out = Mask2::Zero(rows, cols);
  for (Eigen::Index i = radius; i + radius < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      bool all = true;
      for (Eigen::Index t = i - radius; t <= i + radius && all; ++t) all = horiz(t, j) != 0;
      out(i, j) = all ? 1 : 0;
    }
  }
  return out;
}

Mask2 derive_boundary(const Mask2& mask, int thickness_px) {
  if (thickness_px < 1) throw InvalidArgument("boundary thickness must be >= 1");
  const Mask2 inner = erode(mask, thickness_px);
  return ((mask != 0) && (inner == 0)).cast<std::uint8_t>();
}

std::optional<std::array<double, 2>> centroid(const Mask2& mask) {
  double sr = 0.0;
  double sc = 0.0;
  std::ptrdiff_t n = 0;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j) == 0) continue;
      sr += static_cast<double>(i);
      sc += static_cast<double>(j);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return std::array<double, 2>{sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

std::optional<std::array<std::ptrdiff_t, 2>> centroid_pixel(const Mask2& mask) {
  const auto c = centroid(mask);
  if (!c) return std::nullopt;
  auto round_half_down = [](double v) { return static_cast<std::ptrdiff_t>(std::ceil(v - 0.5)); };
  return std::array<std::ptrdiff_t, 2>{round_half_down((*c)[0]), round_half_down((*c)[1])};
}

}  // namespace plseg
