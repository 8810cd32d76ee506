#include "plseg/kernel_transform.hpp"

#include <cmath>

#include "plseg/types.hpp"

namespace plseg {
namespace {

void check_sizes(int core, int target) {
  if (core < 1 || core % 2 == 0) throw InvalidArgument("kernel size must be odd");
  if (target % 2 == 0) throw InvalidArgument("target kernel size must be odd");
  if (target < core) throw InvalidArgument("target kernel size smaller than core");
}

template <typename Scalar>
Scalar sign(Scalar v) {
  return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

}  // namespace

int branch_kernel_size(int branch, int scale_coefficient, int core_size) {
  if (branch < 0) throw InvalidArgument("branch index must be non-negative");
  if (scale_coefficient < 1) throw InvalidArgument("scale coefficient must be >= 1");
  const int size = core_size + branch * scale_coefficient;
  return size % 2 == 0 ? size + 1 : size;
}

template <typename Scalar>
Mat<Scalar> kernel_interpolation_matrix(int core, int target) {
  check_sizes(core, target);
  Mat<Scalar> p = Mat<Scalar>::Zero(target, core);
  if (core == 1) {
    p.setOnes();
    return p;
  }
  for (int j = 0; j < target; ++j) {
    const double pos = static_cast<double>(j) * (core - 1) / (target - 1);
    const int i0 = std::min(static_cast<int>(std::floor(pos)), core - 2);
    const double t = pos - i0;
    p(j, i0) += static_cast<Scalar>(1.0 - t);
    p(j, i0 + 1) += static_cast<Scalar>(t);
  }
  return p;
}

template <typename Scalar>
Mat<Scalar> resample_kernel(const Mat<Scalar>& kernel, int target) {
  if (kernel.rows() != kernel.cols()) throw InvalidArgument("kernel must be square");
  const int k = static_cast<int>(kernel.rows());
  const Mat<Scalar> p = kernel_interpolation_matrix<Scalar>(k, target);
  return p * kernel * p.transpose();
}

template <typename Scalar>
Mat<Scalar> transform_kernel(const Mat<Scalar>& kernel, int target) {
  if (kernel.rows() != kernel.cols()) throw InvalidArgument("kernel must be square");
  check_sizes(static_cast<int>(kernel.rows()), target);
  if (target == kernel.rows()) return kernel;
  Mat<Scalar> r = resample_kernel(kernel, target);
  const Scalar mass_in = kernel.cwiseAbs().sum();
  const Scalar mass_out = r.cwiseAbs().sum();
  if (mass_out == Scalar(0)) return r;
  r *= mass_in / mass_out;
  return r;
}

template <typename Scalar>
Mat<Scalar> transform_kernel_vjp(const Mat<Scalar>& kernel, int target, const Mat<Scalar>& grad_out) {
  const int k = static_cast<int>(kernel.rows());
  check_sizes(k, target);
  if (target == k) return grad_out;
  const Mat<Scalar> p = kernel_interpolation_matrix<Scalar>(k, target);
  const Mat<Scalar> r = p * kernel * p.transpose();
  const Scalar a = kernel.cwiseAbs().sum();
  const Scalar b = r.cwiseAbs().sum();
  if (b == Scalar(0)) return p.transpose() * grad_out * p;
  // out = (a / b) * R(K):  dK = (a/b) R^T(G) + <G, R(K)> * (sign(K)/b - (a/b^2) R^T(sign(R(K))))
  const Mat<Scalar> rt_g = p.transpose() * grad_out * p;
  const Mat<Scalar> rt_sign = p.transpose() * r.unaryExpr([](Scalar v) { return sign(v); }) * p;
  const Scalar inner = (grad_out.array() * r.array()).sum();
  const Mat<Scalar> sign_k = kernel.unaryExpr([](Scalar v) { return sign(v); });
  return (a / b) * rt_g + inner * (sign_k / b - (a / (b * b)) * rt_sign);
}

template <typename Scalar>
Mat<Scalar> transform_conv_weights(const Mat<Scalar>& core, int k, int target) {
  if (core.cols() % (k * k) != 0) throw ShapeMismatch("packed weights are not a multiple of k*k");
  if (target == k) return core;
  const auto cin = core.cols() / (k * k);
  const Mat<Scalar> p = kernel_interpolation_matrix<Scalar>(k, target);
  Mat<Scalar> out(core.rows(), cin * target * target);
  Mat<Scalar> kern(k, k);
  for (Eigen::Index co = 0; co < core.rows(); ++co) {
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
      kern = Eigen::Map<const Mat<Scalar>>(core.data() + co * core.cols() + ci * k * k, k, k);
      Mat<Scalar> r = p * kern * p.transpose();
      const Scalar mass_in = kern.cwiseAbs().sum();
      const Scalar mass_out = r.cwiseAbs().sum();
      if (mass_out != Scalar(0)) r *= mass_in / mass_out;
      Eigen::Map<Mat<Scalar>>(out.data() + co * out.cols() + ci * target * target, target, target) = r;
    }
  }
  return out;
}

template <typename Scalar>
void transform_conv_weights_vjp(const Mat<Scalar>& core, int k, int target, const Mat<Scalar>& grad_transformed,
                                Mat<Scalar>& grad_core) {
  if (grad_core.rows() != core.rows() || grad_core.cols() != core.cols()) {
    throw ShapeMismatch("gradient buffer does not match core weights");
  }
  if (target == k) {
    grad_core += grad_transformed;
    return;
  }
  const auto cin = core.cols() / (k * k);
  Mat<Scalar> kern(k, k);
  Mat<Scalar> g(target, target);
  for (Eigen::Index co = 0; co < core.rows(); ++co) {
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
      kern = Eigen::Map<const Mat<Scalar>>(core.data() + co * core.cols() + ci * k * k, k, k);
      g = Eigen::Map<const Mat<Scalar>>(grad_transformed.data() + co * grad_transformed.cols() + ci * target * target,
                                        target, target);
      Eigen::Map<Mat<Scalar>>(grad_core.data() + co * grad_core.cols() + ci * k * k, k, k) +=
          transform_kernel_vjp<Scalar>(kern, target, g);
    }
  }
}

template <typename Scalar>
Mat<Scalar> scale_conv_weights(const Mat<Scalar>& core, int k, int target) {
  if (core.cols() % (k * k) != 0) throw ShapeMismatch("packed weights are not a multiple of k*k");
  check_sizes(k, target);
  if (target == k) return core;
  const auto cin = core.cols() / (k * k);
  const Mat<Scalar> p = kernel_interpolation_matrix<Scalar>(k, target);
  Mat<Scalar> out(core.rows(), core.cols());
  Mat<Scalar> kern(k, k);
  for (Eigen::Index co = 0; co < core.rows(); ++co) {
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
      kern = Eigen::Map<const Mat<Scalar>>(core.data() + co * core.cols() + ci * k * k, k, k);
      const Scalar mass_out = (p * kern * p.transpose()).cwiseAbs().sum();
      const Scalar s = mass_out == Scalar(0) ? Scalar(1) : kern.cwiseAbs().sum() / mass_out;
      Eigen::Map<Mat<Scalar>>(out.data() + co * out.cols() + ci * k * k, k, k) = s * kern;
    }
  }
  return out;
}

template <typename Scalar>
void scale_conv_weights_vjp(const Mat<Scalar>& core, int k, int target, const Mat<Scalar>& grad_scaled,
                            Mat<Scalar>& grad_core) {
  if (grad_core.rows() != core.rows() || grad_core.cols() != core.cols() || grad_scaled.rows() != core.rows() ||
      grad_scaled.cols() != core.cols()) {
    throw ShapeMismatch("gradient buffer does not match core weights");
  }
  if (target == k) {
    grad_core += grad_scaled;
    return;
  }
  const auto cin = core.cols() / (k * k);
  const Mat<Scalar> p = kernel_interpolation_matrix<Scalar>(k, target);
  Mat<Scalar> kern(k, k), h(k, k);
  for (Eigen::Index co = 0; co < core.rows(); ++co) {
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
      const Eigen::Index off = co * core.cols() + ci * k * k;
      kern = Eigen::Map<const Mat<Scalar>>(core.data() + off, k, k);
      h = Eigen::Map<const Mat<Scalar>>(grad_scaled.data() + off, k, k);
      auto g = Eigen::Map<Mat<Scalar>>(grad_core.data() + off, k, k);
      const Mat<Scalar> r = p * kern * p.transpose();
      const Scalar a = kern.cwiseAbs().sum();
      const Scalar b = r.cwiseAbs().sum();
      if (b == Scalar(0)) {
        g += h;
        continue;
      }
      // K' = s K with s = a / b:  dK = s H + <H, K> (sign(K)/b - (a/b^2) P^T sign(R) P)
      const Mat<Scalar> rt_sign = p.transpose() * r.unaryExpr([](Scalar v) { return sign(v); }) * p;
      const Scalar inner = (h.array() * kern.array()).sum();
      g += (a / b) * h + inner * (kern.unaryExpr([](Scalar v) { return sign(v); }) / b - (a / (b * b)) * rt_sign);
    }
  }
}

#define PLSEG_INSTANTIATE(S)                                                                                    \
  template Mat<S> kernel_interpolation_matrix<S>(int, int);                                                     \
  template Mat<S> resample_kernel<S>(const Mat<S>&, int);                                                       \
  template Mat<S> transform_kernel<S>(const Mat<S>&, int);                                                      \
  template Mat<S> transform_kernel_vjp<S>(const Mat<S>&, int, const Mat<S>&);                                   \
  template Mat<S> transform_conv_weights<S>(const Mat<S>&, int, int);                                           \
  template void transform_conv_weights_vjp<S>(const Mat<S>&, int, int, const Mat<S>&, Mat<S>&);             \
  template Mat<S> scale_conv_weights<S>(const Mat<S>&, int, int);                                               \
  template void scale_conv_weights_vjp<S>(const Mat<S>&, int, int, const Mat<S>&, Mat<S>&);

PLSEG_INSTANTIATE(float)
PLSEG_INSTANTIATE(double)
#undef PLSEG_INSTANTIATE

}  // namespace plseg
