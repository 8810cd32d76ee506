#include "plseg/overlay.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>

#include <png.h>

#include "plseg/mask_ops.hpp"

namespace plseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != 3 * static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
    throw InvalidArgument("write_png: malformed image");
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng error writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) png_write_row(png, const_cast<png_bytep>(image.at(y, 0)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  RgbImage img;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng error reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(3 * static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.at(y, 0), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

RgbImage render_overlay(const Image<float>& slice, const Mask2& pred, const Mask2* reference, int scale) {
  if (scale < 1) throw InvalidArgument("render_overlay: scale must be >= 1");
  if (pred.rows() != slice.rows() || pred.cols() != slice.cols() ||
      (reference && (reference->rows() != slice.rows() || reference->cols() != slice.cols()))) {
    throw ShapeMismatch("render_overlay: slice and mask shapes differ");
  }
  const Mask2 pc = derive_boundary(pred, 1);
  const Mask2 rc = reference ? derive_boundary(*reference, 1) : Mask2::Zero(slice.rows(), slice.cols());
  RgbImage img;
  img.height = static_cast<int>(slice.rows()) * scale;
  img.width = static_cast<int>(slice.cols()) * scale;
  img.pixels.resize(3 * static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (int i = 0; i < slice.rows(); ++i) {
    for (int j = 0; j < slice.cols(); ++j) {
      const auto g = static_cast<std::uint8_t>(std::clamp(slice(i, j), 0.0f, 1.0f) * 255.0f + 0.5f);
      std::uint8_t rgb[3] = {g, g, g};
      if (pc(i, j)) {
        rgb[0] = 0;
        rgb[1] = 255;
        rgb[2] = 0;
      }
      if (rc(i, j)) {
        rgb[0] = 255;
        rgb[1] = 0;
        rgb[2] = 0;
      }
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) std::copy(rgb, rgb + 3, img.at(i * scale + dy, j * scale + dx));
      }
    }
  }
  return img;
}

std::vector<std::filesystem::path> write_overlays(const CtVolume& volume, const MaskVolume& pred,
                                                  const MaskVolume* reference,
                                                  const std::filesystem::path& out_dir,
                                                  const OverlayOptions& options) {
  if (pred.shape() != volume.shape() || (reference && reference->shape() != volume.shape())) {
    throw ShapeMismatch("write_overlays: volume and mask shapes differ");
  }
  const CtVolume norm = volume.domain == IntensityDomain::Normalized ? volume : normalize_intensity(volume);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (std::ptrdiff_t k = 0; k < volume.voxels.slices(); ++k) {
    const Mask2 p = pred.slice(k);
    Mask2 r;
    if (reference) r = reference->slice(k);
    if (options.only_nonempty && !(p != 0).any() && !(reference && (r != 0).any())) continue;
    const Image<float> s = norm.voxels.slice(k);
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03td.png", k);
    write_png(render_overlay(s, p, reference ? &r : nullptr, options.scale), out_dir / name);
    written.push_back(out_dir / name);
  }
  return written;
}

}  // namespace plseg
