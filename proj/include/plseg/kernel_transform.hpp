#pragma once

#include <Eigen/Core>

namespace plseg {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Kernel size used by branch `branch` (0-based): core_size + branch * coefficient,
/// bumped to the next odd size. Coefficient 2 yields 3, 5, 7.
int branch_kernel_size(int branch, int scale_coefficient, int core_size = 3);

/// 1D linear interpolation from `core` to `target` samples spanning the same
/// support (first and last samples coincide). Shape target x core.
template <typename Scalar>
Mat<Scalar> kernel_interpolation_matrix(int core, int target);

/// Bilinear resampling P K P^T of a square kernel. Exactly linear in K.
template <typename Scalar>
Mat<Scalar> resample_kernel(const Mat<Scalar>& kernel, int target);

/// Resampled kernel rescaled so its L1 mass equals the input kernel's.
/// Odd sizes only, target >= core. Identity when target == core.
template <typename Scalar>
Mat<Scalar> transform_kernel(const Mat<Scalar>& kernel, int target);

/// Vector-Jacobian product of transform_kernel at `kernel` with upstream gradient `grad_out`.
template <typename Scalar>
Mat<Scalar> transform_kernel_vjp(const Mat<Scalar>& kernel, int target, const Mat<Scalar>& grad_out);

/// Applies transform_kernel to every k x k kernel of packed convolution weights
/// (Cout rows of Cin * k * k entries, ordered (ci, ky, kx)).
template <typename Scalar>
Mat<Scalar> transform_conv_weights(const Mat<Scalar>& core, int k, int target);

/// Accumulates the gradient w.r.t. packed core weights given the gradient of the
/// transformed weights.
template <typename Scalar>
void transform_conv_weights_vjp(const Mat<Scalar>& core, int k, int target, const Mat<Scalar>& grad_transformed,
                                Mat<Scalar>& grad_core);

/// Factored form of transform_conv_weights: every k x k kernel multiplied by
/// its L1 rescaling factor, so that the transformed kernel equals P K' P^T with
/// P = kernel_interpolation_matrix(k, target). Identity when target == k.
template <typename Scalar>
Mat<Scalar> scale_conv_weights(const Mat<Scalar>& core, int k, int target);

/// Accumulates the gradient w.r.t. packed core weights given the gradient of
/// the scaled weights.
template <typename Scalar>
void scale_conv_weights_vjp(const Mat<Scalar>& core, int k, int target, const Mat<Scalar>& grad_scaled,
                            Mat<Scalar>& grad_core);

}  // namespace plseg
