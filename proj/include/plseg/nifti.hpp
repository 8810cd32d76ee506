#pragma once

#include <filesystem>
#include <string>

#include "plseg/types.hpp"

namespace plseg::nifti {

// Minimal single-file NIfTI-1 (.nii) support. Data axes map as
//   dim[1] = cols (x), dim[2] = rows (y), dim[3] = slices (z)
// and pixdim[1..3] = (dx, dy, dz). Header floats are float32, so spacing
// survives a round trip exactly only when it is representable in float32.

struct Header {
  std::array<std::ptrdiff_t, 3> shape{};  // (slices, rows, cols)
  Spacing3 spacing;
  std::int16_t datatype = 0;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::string descrip;
};

inline constexpr std::int16_t kUint8 = 2;
inline constexpr std::int16_t kInt16 = 4;
inline constexpr std::int16_t kInt32 = 8;
inline constexpr std::int16_t kFloat32 = 16;
inline constexpr std::int16_t kFloat64 = 64;
inline constexpr std::int16_t kInt8 = 256;
inline constexpr std::int16_t kUint16 = 512;

Header read_header(const std::filesystem::path& path);

/// Reads any supported datatype, applying scl_slope/scl_inter when set.
Volume<float> read_float(const std::filesystem::path& path, Header* header = nullptr);

/// Reads an integer-typed image as a binary mask (nonzero -> 1).
MaskVolume read_mask(const std::filesystem::path& path, Header* header = nullptr);

void write_float(const std::filesystem::path& path, const Volume<float>& data, const Spacing3& spacing,
                 const std::string& descrip = {});

void write_mask(const std::filesystem::path& path, const MaskVolume& data, const Spacing3& spacing,
                const std::string& descrip = {});

}  // namespace plseg::nifti
