#pragma once

#include <array>
#include <optional>

#include "plseg/types.hpp"

namespace plseg {

/// Binary erosion with a (2r+1)x(2r+1) square structuring element. Pixels
/// outside the image count as background.
Mask2 erode(const Mask2& mask, int radius);

/// mask AND NOT erode(mask, thickness_px).
Mask2 derive_boundary(const Mask2& mask, int thickness_px = 1);

/// Arithmetic mean of foreground (row, col); nullopt for an empty mask.
std::optional<std::array<double, 2>> centroid(const Mask2& mask);

/// Centroid rounded to the nearest pixel, halves going to the lower index.
std::optional<std::array<std::ptrdiff_t, 2>> centroid_pixel(const Mask2& mask);

/// Threshold a probability map: mask = (p >= threshold).
template <typename Derived>
Mask2 binarize(const Eigen::ArrayBase<Derived>& prob, double threshold = 0.5) {
  return (prob >= static_cast<typename Derived::Scalar>(threshold)).template cast<std::uint8_t>();
}

}  // namespace plseg
