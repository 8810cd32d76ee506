#include "plseg/layers.hpp"

#include <algorithm>
#include <cmath>

namespace plseg {

template <typename Scalar>
Mat<Scalar> im2col(const FeatureMap<Scalar>& in, int k) {
  const int r = k / 2;
  const int h = in.height;
  const int w = in.width;
  Mat<Scalar> cols = Mat<Scalar>::Zero(static_cast<Eigen::Index>(in.channels()) * k * k, h * w);
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int dx = kx - r;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= h || x1 <= x0) continue;
          std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, dst + y * w + x0);
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
FeatureMap<Scalar> col2im(const Mat<Scalar>& cols, int channels, int h, int w, int k) {
  const int r = k / 2;
  FeatureMap<Scalar> out(channels, h, w);
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = out.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int dx = kx - r;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= h) continue;
          for (int x = x0; x < x1; ++x) dst[sy * w + x + dx] += src[y * w + x];
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> separable_patches(const FeatureMap<Scalar>& in, const Mat<Scalar>& taps) {
  const int t = static_cast<int>(taps.rows());
  const int k = static_cast<int>(taps.cols());
  const int r = t / 2;
  const int h = in.height;
  const int w = in.width;
  Mat<Scalar> cols = Mat<Scalar>::Zero(static_cast<Eigen::Index>(in.channels()) * k * k, h * w);
  std::vector<Scalar> vert(static_cast<std::size_t>(h * w));
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.row(c).data();
    for (int a = 0; a < k; ++a) {
      std::fill(vert.begin(), vert.end(), Scalar(0));
      for (int u = 0; u < t; ++u) {
        const Scalar pu = taps(u, a);
        if (pu == Scalar(0)) continue;
        const int dy = u - r;
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const Scalar* s = src + (y + dy) * w;
          Scalar* d = vert.data() + y * w;
          for (int x = 0; x < w; ++x) d[x] += pu * s[x];
        }
      }
      for (int b = 0; b < k; ++b) {
        Scalar* dst = cols.row((static_cast<Eigen::Index>(c) * k + a) * k + b).data();
        for (int v = 0; v < t; ++v) {
          const Scalar pv = taps(v, b);
          if (pv == Scalar(0)) continue;
          const int dx = v - r;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const Scalar* s = vert.data() + y * w + dx;
            Scalar* d = dst + y * w;
            for (int x = x0; x < x1; ++x) d[x] += pv * s[x];
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
FeatureMap<Scalar> separable_patches_adjoint(const Mat<Scalar>& cols, int channels, int h, int w,
                                             const Mat<Scalar>& taps) {
  const int t = static_cast<int>(taps.rows());
  const int k = static_cast<int>(taps.cols());
  const int r = t / 2;
  FeatureMap<Scalar> out(channels, h, w);
  std::vector<Scalar> vert(static_cast<std::size_t>(h * w));
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = out.data.row(c).data();
    for (int a = 0; a < k; ++a) {
      std::fill(vert.begin(), vert.end(), Scalar(0));
      for (int b = 0; b < k; ++b) {
        const Scalar* src = cols.row((static_cast<Eigen::Index>(c) * k + a) * k + b).data();
        for (int v = 0; v < t; ++v) {
          const Scalar pv = taps(v, b);
          if (pv == Scalar(0)) continue;
          const int dx = v - r;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const Scalar* s = src + y * w;
            Scalar* d = vert.data() + y * w + dx;
            for (int x = x0; x < x1; ++x) d[x] += pv * s[x];
          }
        }
      }
      for (int u = 0; u < t; ++u) {
        const Scalar pu = taps(u, a);
        if (pu == Scalar(0)) continue;
        const int dy = u - r;
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const Scalar* s = vert.data() + y * w;
          Scalar* d = dst + (y + dy) * w;
          for (int x = 0; x < w; ++x) d[x] += pu * s[x];
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> max_pool2(const FeatureMap<Scalar>& in, std::vector<std::int32_t>& argmax) {
  const int oh = in.height / 2;
  const int ow = in.width / 2;
  FeatureMap<Scalar> out(in.channels(), oh, ow);
  argmax.assign(static_cast<std::size_t>(in.channels()) * oh * ow, 0);
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.row(c).data();
    Scalar* dst = out.data.row(c).data();
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::int32_t best = (2 * y) * in.width + 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::int32_t idx = (2 * y + dy) * in.width + 2 * x + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        dst[y * ow + x] = src[best];
        argmax[(static_cast<std::size_t>(c) * oh + y) * ow + x] = best;
      }
    }
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> max_pool2_backward(const FeatureMap<Scalar>& grad_out, const std::vector<std::int32_t>& argmax,
                                      int in_h, int in_w) {
  FeatureMap<Scalar> g(grad_out.channels(), in_h, in_w);
  const int n = grad_out.pixels();
  for (int c = 0; c < grad_out.channels(); ++c) {
    const Scalar* src = grad_out.data.row(c).data();
    Scalar* dst = g.data.row(c).data();
    for (int p = 0; p < n; ++p) dst[argmax[static_cast<std::size_t>(c) * n + p]] += src[p];
  }
  return g;
}

template <typename Scalar>
Mat<Scalar> linear_resize_matrix(int in, int out) {
  if (in < 1 || out < 1) throw InvalidArgument("resize extents must be positive");
  Mat<Scalar> m = Mat<Scalar>::Zero(out, in);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double t = src - i0;
    m(o, i0) += static_cast<Scalar>(1.0 - t);
    m(o, i1) += static_cast<Scalar>(t);
  }
  return m;
}

template <typename Scalar>
Mat<Scalar> bilinear_resize_operator(int h, int w, int out_h, int out_w) {
  const Mat<Scalar> ry = linear_resize_matrix<Scalar>(h, out_h);
  const Mat<Scalar> rx = linear_resize_matrix<Scalar>(w, out_w);
  Mat<Scalar> op = Mat<Scalar>::Zero(static_cast<Eigen::Index>(out_h) * out_w, static_cast<Eigen::Index>(h) * w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int iy = 0; iy < h; ++iy) {
      const Scalar a = ry(oy, iy);
      if (a == Scalar(0)) continue;
      for (int ox = 0; ox < out_w; ++ox) {
        for (int ix = 0; ix < w; ++ix) {
          const Scalar b = rx(ox, ix);
          if (b != Scalar(0)) op(oy * out_w + ox, iy * w + ix) = a * b;
        }
      }
    }
  }
  return op;
}

#define PLSEG_INSTANTIATE(S)                                                                               \
  template Mat<S> im2col<S>(const FeatureMap<S>&, int);                                                    \
  template FeatureMap<S> col2im<S>(const Mat<S>&, int, int, int, int);                                     \
  template Mat<S> separable_patches<S>(const FeatureMap<S>&, const Mat<S>&);                                \
  template FeatureMap<S> separable_patches_adjoint<S>(const Mat<S>&, int, int, int, const Mat<S>&);         \
  template FeatureMap<S> max_pool2<S>(const FeatureMap<S>&, std::vector<std::int32_t>&);                   \
  template FeatureMap<S> max_pool2_backward<S>(const FeatureMap<S>&, const std::vector<std::int32_t>&, int, \
                                               int);                                                       \
  template Mat<S> linear_resize_matrix<S>(int, int);                                                       \
  template Mat<S> bilinear_resize_operator<S>(int, int, int, int);

PLSEG_INSTANTIATE(float)
PLSEG_INSTANTIATE(double)
#undef PLSEG_INSTANTIATE

}  // namespace plseg
