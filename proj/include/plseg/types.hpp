#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace plseg {

/// Row-major 2D scalar field (rows = y, cols = x).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major 2D binary mask, one byte per pixel (0 or 1).
using Mask2 = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Errors. Everything thrown by the library derives from Error so callers can
// report a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};
struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what) : Error("shape_mismatch", what) {}
};
struct DataQualityError : Error {
  explicit DataQualityError(const std::string& what) : Error("data_quality", what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

/// Voxel spacing in mm, ordered like the data axes (slice, row, col).
struct Spacing3 {
  double dz = 1.0;
  double dy = 1.0;
  double dx = 1.0;

  bool valid() const noexcept { return dz > 0.0 && dy > 0.0 && dx > 0.0; }
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

/// Dense 3D array stored slice-major: index = (k * rows + i) * cols + j.
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(std::ptrdiff_t slices, std::ptrdiff_t rows, std::ptrdiff_t cols, T fill = T{})
      : slices_(slices), rows_(rows), cols_(cols) {
    if (slices < 0 || rows < 0 || cols < 0) throw InvalidArgument("negative volume extent");
    data_.assign(static_cast<std::size_t>(slices * rows * cols), fill);
  }

  std::ptrdiff_t slices() const noexcept { return slices_; }
  std::ptrdiff_t rows() const noexcept { return rows_; }
  std::ptrdiff_t cols() const noexcept { return cols_; }
  std::array<std::ptrdiff_t, 3> shape() const noexcept { return {slices_, rows_, cols_}; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j) const noexcept {
    return k >= 0 && k < slices_ && i >= 0 && i < rows_ && j >= 0 && j < cols_;
  }

  T& operator()(std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j) { return data_[index(k, i, j)]; }
  const T& operator()(std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j) const { return data_[index(k, i, j)]; }

  using SliceMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstSliceMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  SliceMap slice(std::ptrdiff_t k) { return SliceMap(data_.data() + k * rows_ * cols_, rows_, cols_); }
  ConstSliceMap slice(std::ptrdiff_t k) const {
    return ConstSliceMap(data_.data() + k * rows_ * cols_, rows_, cols_);
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  std::size_t index(std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j) const noexcept {
    return static_cast<std::size_t>((k * rows_ + i) * cols_ + j);
  }

  std::ptrdiff_t slices_ = 0;
  std::ptrdiff_t rows_ = 0;
  std::ptrdiff_t cols_ = 0;
  std::vector<T> data_;
};

using MaskVolume = Volume<std::uint8_t>;

inline std::ptrdiff_t count_foreground(const Mask2& m) { return (m != 0).count(); }

template <typename T>
std::ptrdiff_t count_foreground(const Volume<T>& v) {
  std::ptrdiff_t n = 0;
  for (const auto& x : v.data()) n += (x != T{}) ? 1 : 0;
  return n;
}

}  // namespace plseg
