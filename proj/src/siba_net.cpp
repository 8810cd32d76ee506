#include "plseg/siba_net.hpp"

#include <cmath>
#include <map>
#include <random>
#include <tuple>

namespace plseg {
namespace {

template <typename Scalar>
void relu_inplace(Mat<Scalar>& m) {
  m = m.cwiseMax(Scalar(0));
}

template <typename Scalar>
Image<Scalar> to_image(const Mat<Scalar>& row, int h, int w) {
  return Eigen::Map<const Image<Scalar>>(row.data(), h, w);
}

template <typename Scalar>
Mat<Scalar> sigmoid_row(const Mat<Scalar>& z) {
  return z.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename Scalar>
Mat<Scalar> flat(const Image<Scalar>& img) {
  return Eigen::Map<const Mat<Scalar>>(img.data(), 1, img.size());
}

// Resize operators depend only on the input size; cache them per thread.
template <typename Scalar>
const Mat<Scalar>& cached_resize(int h, int w, int out_h, int out_w) {
  thread_local std::map<std::tuple<int, int, int, int>, Mat<Scalar>> cache;
  const auto key = std::make_tuple(h, w, out_h, out_w);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, bilinear_resize_operator<Scalar>(h, w, out_h, out_w)).first;
  return it->second;
}

template <typename Scalar>
void head_forward(const HeadParams<Scalar>& hp, const Mat<Scalar>& input, Mat<Scalar>& hidden, Mat<Scalar>& prob) {
  hidden = hp.hidden_w * input;
  hidden.colwise() += hp.hidden_b;
  relu_inplace(hidden);
  Mat<Scalar> z = hp.out_w * hidden;
  z.array() += hp.out_b(0);
  prob = sigmoid_row(z);
}

}  // namespace

const char* level_name(int level) {
  static const char* kNames[] = {"l1", "l2", "l3", "l_com"};
  if (level < 0 || level >= kLevels) throw InvalidArgument("level index out of range");
  return kNames[level];
}

void NetConfig::validate() const {
  if (n_branches < 1) throw InvalidArgument("n_branches must be >= 1");
  if (n_branches > 255) throw InvalidArgument("n_branches must be <= 255");
  if (scale_coefficient < 1) throw InvalidArgument("scale_coefficient must be >= 1");
  if (boundary_thickness_px < 1) throw InvalidArgument("boundary_thickness_px must be >= 1");
  for (int w : widths) {
    if (w < 1) throw InvalidArgument("backbone widths must be positive");
  }
  if (projection_channels < 1 || head_channels < 1) throw InvalidArgument("head widths must be positive");
  if (min_input_px < 4) throw InvalidArgument("min_input_px must be >= 4");
}

int NetConfig::conv_in(int layer) const {
  if (layer == 0) return 1;
  return layer % 2 == 0 ? widths[static_cast<std::size_t>(layer / 2 - 1)] : widths[static_cast<std::size_t>(layer / 2)];
}

int NetConfig::final_in() const {
  int heads = kLevels;
  for (int l = 0; l < kLevels; ++l) heads += has_boundary_head(l) ? 1 : 0;
  return heads * head_channels;
}

template <typename Scalar>
int NetworkOutputs<Scalar>::map_count() const {
  int n = final_map.size() > 0 ? 1 : 0;
  for (int l = 0; l < kLevels; ++l) n += (region[l].size() > 0 ? 1 : 0) + (has_boundary(l) ? 1 : 0);
  return n;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros(const NetConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  for (int l = 0; l < kConvLayers; ++l) {
    p.conv_w[l] = Mat<Scalar>::Zero(config.conv_out(l), config.conv_in(l) * kCoreKernel * kCoreKernel);
    p.conv_b[l] = Vec<Scalar>::Zero(config.conv_out(l));
  }
  for (int l = 0; l < kBackboneLevels; ++l) {
    p.proj_w[l] = Mat<Scalar>::Zero(config.projection_channels, config.widths[l]);
    p.proj_b[l] = Vec<Scalar>::Zero(config.projection_channels);
  }
  auto make_head = [&](int in) {
    HeadParams<Scalar> h;
    h.hidden_w = Mat<Scalar>::Zero(config.head_channels, in);
    h.hidden_b = Vec<Scalar>::Zero(config.head_channels);
    h.out_w = Mat<Scalar>::Zero(1, config.head_channels);
    h.out_b = Vec<Scalar>::Zero(1);
    return h;
  };
  for (int l = 0; l < kLevels; ++l) {
    p.region[l] = make_head(config.head_in(l));
    if (config.has_boundary_head(l)) p.boundary[l] = make_head(config.head_in(l));
  }
  p.final_w = Mat<Scalar>::Zero(1, config.final_in());
  p.final_b = Vec<Scalar>::Zero(1);
  return p;
}

template <typename Scalar>
std::size_t ModelParams<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Scalar>
Eigen::VectorXd ModelParams<Scalar>::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for_each([&](const std::string&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) out(k++) = static_cast<double>(t.data()[i]);
  });
  return out;
}

template <typename Scalar>
void ModelParams<Scalar>::unflatten(const Eigen::VectorXd& flat_values) {
  if (flat_values.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw ShapeMismatch("unflatten: parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for_each([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(flat_values(k++));
  });
}

template <typename Scalar>
bool ModelParams<Scalar>::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

template <typename Scalar>
ModelParams<Scalar>& ModelParams<Scalar>::operator+=(const ModelParams& other) {
  std::vector<const Scalar*> src;
  other.for_each([&](const std::string&, const auto& t) { src.push_back(t.data()); });
  std::size_t n = 0;
  for_each([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += src[n][i];
    ++n;
  });
  return *this;
}

template <typename Scalar>
ModelParams<Scalar>& ModelParams<Scalar>::operator*=(Scalar s) {
  for_each([&](const std::string&, auto& t) { t *= s; });
  return *this;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const NetConfig& config, std::uint64_t seed) {
  ModelParams<double> p = ModelParams<double>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Mat<double>& w, double gain) {
    const double std = std::sqrt(gain / static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std * normal(rng);
  };
  for (auto& w : p.conv_w) fill(w, 2.0);
  for (auto& w : p.proj_w) fill(w, 1.0);
  for (int l = 0; l < kLevels; ++l) {
    fill(p.region[l].hidden_w, 2.0);
    fill(p.region[l].out_w, 1.0);
    if (config.has_boundary_head(l)) {
      fill(p.boundary[l].hidden_w, 2.0);
      fill(p.boundary[l].out_w, 1.0);
    }
  }
  fill(p.final_w, 1.0);
  if constexpr (std::is_same_v<Scalar, double>) {
    return p;
  } else {
    return p.template cast<Scalar>();
  }
}

template <typename Scalar>
BranchWeights<Scalar> prepare_branch_weights(const ModelParams<Scalar>& params) {
  BranchWeights<Scalar> bw;
  for (int b = 0; b < params.config.n_branches; ++b) {
    const int k = params.config.kernel_size(b);
    bw.kernel_size.push_back(k);
    bw.taps.push_back(k == kCoreKernel ? Mat<Scalar>() : kernel_interpolation_matrix<Scalar>(kCoreKernel, k));
    std::array<Mat<Scalar>, kConvLayers> w;
    for (int l = 0; l < kConvLayers; ++l) w[l] = scale_conv_weights<Scalar>(params.conv_w[l], kCoreKernel, k);
    bw.conv_w.push_back(std::move(w));
  }
  return bw;
}

template <typename Scalar>
NetworkOutputs<Scalar> forward(const Image<Scalar>& crop, const ModelParams<Scalar>& params,
                               const BranchWeights<Scalar>& weights, ForwardTape<Scalar>* tape) {
  const NetConfig& cfg = params.config;
  const int h = static_cast<int>(crop.rows());
  const int w = static_cast<int>(crop.cols());
  if (h < cfg.min_input_px || w < cfg.min_input_px) {
    throw InvalidArgument("forward: input " + std::to_string(h) + "x" + std::to_string(w) + " below minimum " +
                          std::to_string(cfg.min_input_px) + "x" + std::to_string(cfg.min_input_px));
  }
  if (static_cast<int>(weights.conv_w.size()) != cfg.n_branches) {
    throw InvalidArgument("forward: branch weights do not match n_branches");
  }
  const int n = h * w;

  ForwardTape<Scalar> local;
  ForwardTape<Scalar>& t = tape ? *tape : local;
  t.height = h;
  t.width = w;
  t.branches.assign(static_cast<std::size_t>(cfg.n_branches), BranchTape<Scalar>{});

  const FeatureMap<Scalar> input(flat(crop), h, w);
  for (int b = 0; b < cfg.n_branches; ++b) {
    BranchTape<Scalar>& bt = t.branches[b];
    const int k = weights.kernel_size[b];
    const FeatureMap<Scalar>* cur = &input;
    FeatureMap<Scalar> pooled;
    for (int l = 0; l < kConvLayers; ++l) {
      if (l == 2 || l == 4) {
        pooled = max_pool2(*cur, bt.pool_argmax[l / 2 - 1]);
        cur = &pooled;
      }
      bt.cols[l] = k == kCoreKernel ? im2col(*cur, k) : separable_patches(*cur, weights.taps[b]);
      Mat<Scalar> out = weights.conv_w[b][l] * bt.cols[l];
      out.colwise() += params.conv_b[l];
      relu_inplace(out);
      bt.act[l] = FeatureMap<Scalar>(std::move(out), cur->height, cur->width);
      cur = &bt.act[l];
      if (l % 2 == 1) {
        const int lev = l / 2;
        Mat<Scalar> proj = params.proj_w[lev] * cur->data;
        proj.colwise() += params.proj_b[lev];
        if (cur->height == h && cur->width == w) {
          bt.level[lev] = std::move(proj);
          t.resize_op[lev].resize(0, 0);
        } else {
          t.resize_op[lev] = cached_resize<Scalar>(cur->height, cur->width, h, w);
          bt.level[lev] = proj * t.resize_op[lev].transpose();
        }
      }
    }
  }

  // Scale-invariant fusion: element-wise max across branches, remembering the winner.
  for (int lev = 0; lev < kBackboneLevels; ++lev) {
    std::vector<const Mat<Scalar>*> responses;
    for (const auto& bt : t.branches) responses.push_back(&bt.level[lev]);
    t.fused[lev] = scale_invariant_fuse(responses, &t.winner[lev]);
  }

  for (int lev = 0; lev < kBackboneLevels; ++lev) t.head_input[lev] = t.fused[lev];
  const int p = cfg.projection_channels;
  t.head_input[Com].resize(3 * p, n);
  for (int lev = 0; lev < kBackboneLevels; ++lev) t.head_input[Com].middleRows(lev * p, p) = t.fused[lev];

  NetworkOutputs<Scalar>& out = t.outputs;
  out = NetworkOutputs<Scalar>{};
  Mat<Scalar> prob;
  for (int lev = 0; lev < kLevels; ++lev) {
    head_forward(params.region[lev], t.head_input[lev], t.region_hidden[lev], prob);
    out.region[lev] = to_image(prob, h, w);
    if (cfg.has_boundary_head(lev)) {
      head_forward(params.boundary[lev], t.head_input[lev], t.boundary_hidden[lev], prob);
      out.boundary[lev] = to_image(prob, h, w);
    } else {
      t.boundary_hidden[lev].resize(0, 0);
    }
  }

  const int q = cfg.head_channels;
  t.final_input.resize(cfg.final_in(), n);
  int row = 0;
  for (int lev = 0; lev < kLevels; ++lev, row += q) t.final_input.middleRows(row, q) = t.region_hidden[lev];
  for (int lev = 0; lev < kLevels; ++lev) {
    if (!cfg.has_boundary_head(lev)) continue;
    t.final_input.middleRows(row, q) = t.boundary_hidden[lev];
    row += q;
  }
  Mat<Scalar> z = params.final_w * t.final_input;
  z.array() += params.final_b(0);
  out.final_map = to_image(sigmoid_row(z), h, w);
  return out;
}

template <typename Scalar>
NetworkOutputs<Scalar> forward(const Image<Scalar>& crop, const ModelParams<Scalar>& params) {
  return forward<Scalar>(crop, params, prepare_branch_weights(params), nullptr);
}

template <typename Scalar>
GradientAccumulator<Scalar>::GradientAccumulator(const ModelParams<Scalar>& params,
                                                 const BranchWeights<Scalar>& weights)
    : params_(params), weights_(weights), grads_(ModelParams<Scalar>::zeros(params.config)) {
  for (int b = 0; b < params.config.n_branches; ++b) {
    std::array<Mat<Scalar>, kConvLayers> g;
    for (int l = 0; l < kConvLayers; ++l) g[l] = Mat<Scalar>::Zero(weights.conv_w[b][l].rows(), weights.conv_w[b][l].cols());
    branch_grads_.push_back(std::move(g));
  }
}

template <typename Scalar>
void GradientAccumulator<Scalar>::add(const ForwardTape<Scalar>& t, const NetworkOutputs<Scalar>& og) {
  const NetConfig& cfg = params_.config;
  const NetworkOutputs<Scalar>& out = t.outputs;
  const int n = t.height * t.width;
  const int q = cfg.head_channels;
  const int p = cfg.projection_channels;

  // dLoss/dz for a sigmoid output with probability row `prob`.
  auto dz_of = [&](const Image<Scalar>& prob, const Image<Scalar>& dprob) -> Mat<Scalar> {
    if (dprob.size() == 0) return Mat<Scalar>::Zero(1, n);
    return (flat(dprob).array() * flat(prob).array() * (Scalar(1) - flat(prob).array())).matrix();
  };

  // Final head.
  const Mat<Scalar> dz_final = dz_of(out.final_map, og.final_map);
  grads_.final_w += dz_final * t.final_input.transpose();
  grads_.final_b(0) += dz_final.sum();
  const Mat<Scalar> d_final_input = params_.final_w.transpose() * dz_final;

  std::array<Mat<Scalar>, kLevels> d_head_input;
  for (int lev = 0; lev < kLevels; ++lev) d_head_input[lev] = Mat<Scalar>::Zero(cfg.head_in(lev), n);

  auto head_backward = [&](const HeadParams<Scalar>& hp, HeadParams<Scalar>& g, const Mat<Scalar>& input,
                           const Mat<Scalar>& hidden, const Image<Scalar>& prob, const Image<Scalar>& dprob,
                           const Mat<Scalar>& d_hidden_extra, Mat<Scalar>& d_input) {
    const Mat<Scalar> dz = dz_of(prob, dprob);
    g.out_w += dz * hidden.transpose();
    g.out_b(0) += dz.sum();
    Mat<Scalar> dh = hp.out_w.transpose() * dz + d_hidden_extra;
    dh = (hidden.array() > Scalar(0)).select(dh, Scalar(0));
    g.hidden_w += dh * input.transpose();
    g.hidden_b += dh.rowwise().sum();
    d_input.noalias() += hp.hidden_w.transpose() * dh;
  };

  int row = 0;
  for (int lev = 0; lev < kLevels; ++lev, row += q) {
    head_backward(params_.region[lev], grads_.region[lev], t.head_input[lev], t.region_hidden[lev], out.region[lev],
                  og.region[lev], d_final_input.middleRows(row, q), d_head_input[lev]);
  }
  for (int lev = 0; lev < kLevels; ++lev) {
    if (!cfg.has_boundary_head(lev)) continue;
    head_backward(params_.boundary[lev], grads_.boundary[lev], t.head_input[lev], t.boundary_hidden[lev],
                  out.boundary[lev], og.boundary[lev], d_final_input.middleRows(row, q), d_head_input[lev]);
    row += q;
  }

  std::array<Mat<Scalar>, kBackboneLevels> d_fused;
  for (int lev = 0; lev < kBackboneLevels; ++lev) {
    d_fused[lev] = d_head_input[lev] + d_head_input[Com].middleRows(lev * p, p);
  }

  for (int b = 0; b < cfg.n_branches; ++b) {
    const BranchTape<Scalar>& bt = t.branches[b];
    const int k = weights_.kernel_size[b];
    std::array<Mat<Scalar>, kConvLayers> d_act;
    for (int lev = 0; lev < kBackboneLevels; ++lev) {
      // Route the fused gradient to the winning branch.
      Mat<Scalar> dz = d_fused[lev];
      for (Eigen::Index i = 0; i < dz.size(); ++i) {
        if (t.winner[lev].data()[i] != b) dz.data()[i] = Scalar(0);
      }
      const Mat<Scalar> d_low = t.resize_op[lev].size() > 0 ? Mat<Scalar>(dz * t.resize_op[lev]) : dz;
      const FeatureMap<Scalar>& feat = bt.act[2 * lev + 1];
      grads_.proj_w[lev] += d_low * feat.data.transpose();
      grads_.proj_b[lev] += d_low.rowwise().sum();
      d_act[2 * lev + 1] = params_.proj_w[lev].transpose() * d_low;
    }
    for (int l = kConvLayers - 1; l >= 0; --l) {
      const FeatureMap<Scalar>& act = bt.act[l];
      Mat<Scalar> d_pre = (act.data.array() > Scalar(0)).select(d_act[l], Scalar(0));
      branch_grads_[b][l].noalias() += d_pre * bt.cols[l].transpose();
      grads_.conv_b[l] += d_pre.rowwise().sum();
      if (l == 0) break;
      const Mat<Scalar> d_cols = weights_.conv_w[b][l].transpose() * d_pre;
      FeatureMap<Scalar> d_in =
          k == kCoreKernel ? col2im(d_cols, cfg.conv_in(l), act.height, act.width, k)
                           : separable_patches_adjoint(d_cols, cfg.conv_in(l), act.height, act.width, weights_.taps[b]);
      if (l == 2 || l == 4) {
        const FeatureMap<Scalar>& before = bt.act[l - 1];
        d_in = max_pool2_backward(d_in, bt.pool_argmax[l / 2 - 1], before.height, before.width);
      }
      if (d_act[l - 1].size() == 0) {
        d_act[l - 1] = std::move(d_in.data);
      } else {
        d_act[l - 1] += d_in.data;
      }
    }
  }
}

template <typename Scalar>
ModelParams<Scalar> GradientAccumulator<Scalar>::finish() const {
  ModelParams<Scalar> g = grads_;
  for (int b = 0; b < params_.config.n_branches; ++b) {
    for (int l = 0; l < kConvLayers; ++l) {
      scale_conv_weights_vjp<Scalar>(params_.conv_w[l], kCoreKernel, weights_.kernel_size[b], branch_grads_[b][l],
                                     g.conv_w[l]);
    }
  }
  if (!g.all_finite()) throw DivergenceError("non-finite gradient");
  return g;
}

template <typename Scalar>
ModelParams<Scalar> backward(const ForwardTape<Scalar>& tape, const ModelParams<Scalar>& params,
                             const BranchWeights<Scalar>& weights, const NetworkOutputs<Scalar>& output_grads) {
  GradientAccumulator<Scalar> acc(params, weights);
  acc.add(tape, output_grads);
  return acc.finish();
}

#define PLSEG_INSTANTIATE(S)                                                                                   \
  template struct NetworkOutputs<S>;                                                                           \
  template struct ModelParams<S>;                                                                              \
  template ModelParams<S> init_params<S>(const NetConfig&, std::uint64_t);                                     \
  template BranchWeights<S> prepare_branch_weights<S>(const ModelParams<S>&);                                  \
  template NetworkOutputs<S> forward<S>(const Image<S>&, const ModelParams<S>&, const BranchWeights<S>&,       \
                                        ForwardTape<S>*);                                                      \
  template NetworkOutputs<S> forward<S>(const Image<S>&, const ModelParams<S>&);                               \
  template class GradientAccumulator<S>;                                                                       \
  template ModelParams<S> backward<S>(const ForwardTape<S>&, const ModelParams<S>&, const BranchWeights<S>&, \
                                      const NetworkOutputs<S>&);

PLSEG_INSTANTIATE(float)
PLSEG_INSTANTIATE(double)
#undef PLSEG_INSTANTIATE

}  // namespace plseg
