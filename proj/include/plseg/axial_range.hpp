#pragma once

#include <cstddef>
#include <string>

#include "plseg/types.hpp"

namespace plseg {

/// Slice offsets [lo, hi] around the RECIST slice that the lesion may occupy.
/// Before clipping the interval is [-half_extent, +half_extent].
struct AxialRange {
  std::string lesion_id;
  std::ptrdiff_t half_extent = 0;  // D_i before clipping
  std::ptrdiff_t lo = 0;
  std::ptrdiff_t hi = 0;

  bool contains(std::ptrdiff_t offset) const noexcept { return offset >= lo && offset <= hi; }
  std::ptrdiff_t count() const noexcept { return hi - lo + 1; }
  friend bool operator==(const AxialRange&, const AxialRange&) = default;
};

/// Largest centre-to-centre distance (mm) between boundary pixels of the mask.
double max_diameter_mm(const Mask2& mask, double dy, double dx);

/// floor(0.8 * diameter_mm / dz); the unclipped half extent of the axial range.
std::ptrdiff_t axial_half_extent(double diameter_mm, double dz);

/// Range [-D, +D] around `recist_slice`, clipped so every offset addresses a slice in [0, n_slices).
AxialRange make_axial_range(std::ptrdiff_t half_extent, std::ptrdiff_t recist_slice, std::ptrdiff_t n_slices,
                            std::string lesion_id = {});

struct LesionRecord;
struct CtVolume;

AxialRange estimate_axial_range(const LesionRecord& record, const CtVolume& volume);

}  // namespace plseg
