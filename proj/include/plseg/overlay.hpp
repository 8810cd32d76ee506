#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "plseg/volume.hpp"

namespace plseg {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(int y, int x) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* at(int y, int x) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

void write_png(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);

/// Grey slice (normalized intensities) with the prediction contour in green
/// and, if given, the reference contour in red (red wins where they coincide).
/// Each pixel becomes a scale x scale block.
RgbImage render_overlay(const Image<float>& slice, const Mask2& pred, const Mask2* reference, int scale = 4);

struct OverlayOptions {
  int scale = 4;
  bool only_nonempty = true;  // skip slices where no mask has foreground
};

/// Writes slice_NNN.png for every slice of the volume. Returns the files written.
std::vector<std::filesystem::path> write_overlays(const CtVolume& volume, const MaskVolume& pred,
                                                  const MaskVolume* reference,
                                                  const std::filesystem::path& out_dir,
                                                  const OverlayOptions& options = {});

}  // namespace plseg
