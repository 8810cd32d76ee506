#pragma once

#include <cstdint>
#include <vector>

#include "plseg/kernel_transform.hpp"
#include "plseg/types.hpp"

namespace plseg {

/// Multi-channel feature map: one row per channel, each row an h x w image in row-major order.
template <typename Scalar>
struct FeatureMap {
  Mat<Scalar> data;
  int height = 0;
  int width = 0;

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w) : data(Mat<Scalar>::Zero(channels, h * w)), height(h), width(w) {}
  FeatureMap(Mat<Scalar> d, int h, int w) : data(std::move(d)), height(h), width(w) {}

  int channels() const noexcept { return static_cast<int>(data.rows()); }
  int pixels() const noexcept { return height * width; }
};

/// Zero-padded "same" patch matrix: row (c, ky, kx), column (y, x).
template <typename Scalar>
Mat<Scalar> im2col(const FeatureMap<Scalar>& in, int k);

/// Scatter-add adjoint of im2col.
template <typename Scalar>
FeatureMap<Scalar> col2im(const Mat<Scalar>& cols, int channels, int h, int w, int k);

/// Patch matrix for kernels of the form P K P^T, with `taps` = P (t x k):
/// row (c, a, b) holds the input correlated with column a of P vertically and
/// column b horizontally, zero-padded with radius t / 2. Multiplying packed
/// k x k weights by this matrix equals the t x t "same" convolution.
template <typename Scalar>
Mat<Scalar> separable_patches(const FeatureMap<Scalar>& in, const Mat<Scalar>& taps);

/// Adjoint of separable_patches.
template <typename Scalar>
FeatureMap<Scalar> separable_patches_adjoint(const Mat<Scalar>& cols, int channels, int h, int w,
                                             const Mat<Scalar>& taps);

/// 2x2 max pooling with floor output size. `argmax` receives, per output
/// element, the flat input pixel index that won.
template <typename Scalar>
FeatureMap<Scalar> max_pool2(const FeatureMap<Scalar>& in, std::vector<std::int32_t>& argmax);

template <typename Scalar>
FeatureMap<Scalar> max_pool2_backward(const FeatureMap<Scalar>& grad_out, const std::vector<std::int32_t>& argmax,
                                      int in_h, int in_w);

/// 1D half-pixel bilinear resampling matrix (out x in), edge-clamped.
template <typename Scalar>
Mat<Scalar> linear_resize_matrix(int in, int out);

/// Dense operator that resizes a flattened h x w image to H x W: y = x * op^T,
/// where op = Ry (x) Rx has shape (H*W) x (h*w).
template <typename Scalar>
Mat<Scalar> bilinear_resize_operator(int h, int w, int out_h, int out_w);

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

}  // namespace plseg
