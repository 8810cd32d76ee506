#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plseg/kernel_transform.hpp"
#include "plseg/layers.hpp"
#include "plseg/types.hpp"

namespace plseg {

/// Deep-supervision levels. Com is the combination of the three backbone levels.
enum Level : int { L1 = 0, L2 = 1, L3 = 2, Com = 3 };
inline constexpr int kLevels = 4;
inline constexpr int kBackboneLevels = 3;
inline constexpr int kConvLayers = 6;
inline constexpr int kCoreKernel = 3;

const char* level_name(int level);

struct NetConfig {
  int n_branches = 3;
  int scale_coefficient = 2;
  bool boundary_aware = true;
  bool combined_boundary_head = true;  // boundary head on the combined level
  int boundary_thickness_px = 1;
  std::array<int, 3> widths{16, 32, 64};
  int projection_channels = 8;
  int head_channels = 8;
  int min_input_px = 32;

  void validate() const;
  int kernel_size(int branch) const { return branch_kernel_size(branch, scale_coefficient, kCoreKernel); }
  bool has_boundary_head(int level) const {
    return boundary_aware && (level != Com || combined_boundary_head);
  }
  int conv_in(int layer) const;
  int conv_out(int layer) const { return widths[static_cast<std::size_t>(layer / 2)]; }
  int head_in(int level) const { return level == Com ? 3 * projection_channels : projection_channels; }
  int final_in() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

template <typename Scalar>
struct HeadParams {
  Mat<Scalar> hidden_w;
  Vec<Scalar> hidden_b;
  Mat<Scalar> out_w;
  Vec<Scalar> out_b;
};

/// Trainable parameters: the core-branch backbone and the heads. Larger-kernel
/// branches are derived from the core kernels on every forward pass, so nothing
/// here depends on n_branches.
template <typename Scalar>
struct ModelParams {
  NetConfig config;
  std::array<Mat<Scalar>, kConvLayers> conv_w;  // Cout x (Cin * 3 * 3)
  std::array<Vec<Scalar>, kConvLayers> conv_b;
  std::array<Mat<Scalar>, kBackboneLevels> proj_w;  // P x C_level
  std::array<Vec<Scalar>, kBackboneLevels> proj_b;
  std::array<HeadParams<Scalar>, kLevels> region;
  std::array<HeadParams<Scalar>, kLevels> boundary;  // only levels with has_boundary_head
  Mat<Scalar> final_w;
  Vec<Scalar> final_b;

  static ModelParams zeros(const NetConfig& config);

  /// Visits every trainable tensor as f(name, tensor) in a fixed order.
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  bool all_finite() const;

  template <typename To>
  ModelParams<To> cast() const;

  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(Scalar s);
};

/// Element-wise maximum across branch responses. `winner`, if given, receives
/// the index of the first branch attaining the maximum at each entry.
template <typename Scalar>
Mat<Scalar> scale_invariant_fuse(const std::vector<const Mat<Scalar>*>& responses,
                                 Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>* winner =
                                     nullptr) {
  if (responses.empty()) throw InvalidArgument("scale_invariant_fuse: no responses");
  Mat<Scalar> out = *responses[0];
  if (winner) winner->setZero(out.rows(), out.cols());
  for (std::size_t b = 1; b < responses.size(); ++b) {
    const Mat<Scalar>& z = *responses[b];
    if (z.rows() != out.rows() || z.cols() != out.cols()) throw ShapeMismatch("scale_invariant_fuse: shapes differ");
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (z.data()[i] > out.data()[i]) {
        out.data()[i] = z.data()[i];
        if (winner) winner->data()[i] = static_cast<std::uint8_t>(b);
      }
    }
  }
  return out;
}

/// Fan-in scaled Gaussian initialisation, fully determined by the seed.
template <typename Scalar>
ModelParams<Scalar> init_params(const NetConfig& config, std::uint64_t seed);

/// Per-pixel probability maps, all aligned with the input crop. Boundary maps
/// of disabled heads are empty (0 x 0).
template <typename Scalar>
struct NetworkOutputs {
  std::array<Image<Scalar>, kLevels> region;
  std::array<Image<Scalar>, kLevels> boundary;
  Image<Scalar> final_map;

  bool has_boundary(int level) const { return boundary[static_cast<std::size_t>(level)].size() > 0; }
  int map_count() const;
};

/// Backbone kernels for every branch in factored form: the t x t kernel of
/// branch b is P_b K' P_b^T, where K' (stored in conv_w) is the core kernel
/// times its L1 rescaling factor. Branches at the core size keep P empty.
template <typename Scalar>
struct BranchWeights {
  std::vector<int> kernel_size;
  std::vector<Mat<Scalar>> taps;
  std::vector<std::array<Mat<Scalar>, kConvLayers>> conv_w;
};

template <typename Scalar>
BranchWeights<Scalar> prepare_branch_weights(const ModelParams<Scalar>& params);

template <typename Scalar>
struct BranchTape {
  std::array<Mat<Scalar>, kConvLayers> cols;
  std::array<FeatureMap<Scalar>, kConvLayers> act;  // post-ReLU
  std::array<std::vector<std::int32_t>, 2> pool_argmax;
  std::array<Mat<Scalar>, kBackboneLevels> level;  // projected + resized, P x N
};

/// Intermediate values recorded by forward() for backward().
template <typename Scalar>
struct ForwardTape {
  int height = 0;
  int width = 0;
  std::vector<BranchTape<Scalar>> branches;
  std::array<Mat<Scalar>, kBackboneLevels> resize_op;  // empty for level 1
  std::array<Mat<Scalar>, kBackboneLevels> fused;
  std::array<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, kBackboneLevels> winner;
  std::array<Mat<Scalar>, kLevels> head_input;
  std::array<Mat<Scalar>, kLevels> region_hidden;
  std::array<Mat<Scalar>, kLevels> boundary_hidden;
  Mat<Scalar> final_input;
  NetworkOutputs<Scalar> outputs;
};

template <typename Scalar>
NetworkOutputs<Scalar> forward(const Image<Scalar>& crop, const ModelParams<Scalar>& params,
                               const BranchWeights<Scalar>& weights, ForwardTape<Scalar>* tape = nullptr);

template <typename Scalar>
NetworkOutputs<Scalar> forward(const Image<Scalar>& crop, const ModelParams<Scalar>& params);

/// Sums parameter gradients over several backward passes. Gradients of the
/// transformed branch kernels are collected per branch and mapped back to the
/// core kernels once, in finish().
template <typename Scalar>
class GradientAccumulator {
 public:
  GradientAccumulator(const ModelParams<Scalar>& params, const BranchWeights<Scalar>& weights);

  /// `output_grads` holds dLoss/d(probability) for each output map.
  void add(const ForwardTape<Scalar>& tape, const NetworkOutputs<Scalar>& output_grads);

  /// Returns the gradient w.r.t. the trainable parameters. Throws
  /// DivergenceError if any entry is non-finite.
  ModelParams<Scalar> finish() const;

 private:
  const ModelParams<Scalar>& params_;
  const BranchWeights<Scalar>& weights_;
  ModelParams<Scalar> grads_;
  std::vector<std::array<Mat<Scalar>, kConvLayers>> branch_grads_;
};

template <typename Scalar>
ModelParams<Scalar> backward(const ForwardTape<Scalar>& tape, const ModelParams<Scalar>& params,
                             const BranchWeights<Scalar>& weights, const NetworkOutputs<Scalar>& output_grads);

// ---------------------------------------------------------------------------

template <typename Scalar>
template <typename F>
void ModelParams<Scalar>::for_each(F&& f) {
  static const char* kHead[] = {"l1", "l2", "l3", "com"};
  for (int l = 0; l < kConvLayers; ++l) {
    f("backbone.conv" + std::to_string(l) + ".weight", conv_w[l]);
    f("backbone.conv" + std::to_string(l) + ".bias", conv_b[l]);
  }
  for (int l = 0; l < kBackboneLevels; ++l) {
    f(std::string("proj.") + kHead[l] + ".weight", proj_w[l]);
    f(std::string("proj.") + kHead[l] + ".bias", proj_b[l]);
  }
  auto head = [&](const std::string& prefix, HeadParams<Scalar>& h) {
    f(prefix + ".hidden.weight", h.hidden_w);
    f(prefix + ".hidden.bias", h.hidden_b);
    f(prefix + ".out.weight", h.out_w);
    f(prefix + ".out.bias", h.out_b);
  };
  for (int l = 0; l < kLevels; ++l) head(std::string("head.region.") + kHead[l], region[l]);
  for (int l = 0; l < kLevels; ++l) {
    if (config.has_boundary_head(l)) head(std::string("head.boundary.") + kHead[l], boundary[l]);
  }
  f("head.final.weight", final_w);
  f("head.final.bias", final_b);
}

template <typename Scalar>
template <typename F>
void ModelParams<Scalar>::for_each(F&& f) const {
  const_cast<ModelParams*>(this)->for_each([&](const std::string& name, auto& t) { f(name, std::as_const(t)); });
}

template <typename Scalar>
template <typename To>
ModelParams<To> ModelParams<Scalar>::cast() const {
  ModelParams<To> out = ModelParams<To>::zeros(config);
  std::vector<const Scalar*> src;
  std::vector<Eigen::Index> sizes;
  for_each([&](const std::string&, const auto& t) {
    src.push_back(t.data());
    sizes.push_back(t.size());
  });
  std::size_t n = 0;
  out.for_each([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < sizes[n]; ++i) t.data()[i] = static_cast<To>(src[n][i]);
    ++n;
  });
  return out;
}

}  // namespace plseg
