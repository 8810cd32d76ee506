#pragma once

#include <vector>

#include <Eigen/Core>

#include "plseg/mask_ops.hpp"
#include "plseg/types.hpp"

namespace plseg {

/// Two-label fully-connected CRF with Potts compatibility. Kernel bandwidths are
/// in pixels (spatial) and normalized-intensity units (appearance).
struct CrfConfig {
  int n_iters = 5;
  double w_appearance = 5.0;
  double w_smooth = 3.0;
  double theta_alpha = 20.0;  // appearance kernel, spatial part
  double theta_beta = 0.1;    // appearance kernel, intensity part
  double theta_gamma = 3.0;   // smoothness kernel
  double prob_floor = 1e-6;
  int max_pixels = 128 * 128;

  void validate() const;
  friend bool operator==(const CrfConfig&, const CrfConfig&) = default;
};

/// Per-pixel label distributions, column 0 = background, column 1 = foreground.
using LabelDistribution = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Dense symmetric pairwise weights k(i, j) with a zero diagonal:
///   w_a exp(-|p_i-p_j|^2 / 2 theta_a^2 - |I_i-I_j|^2 / 2 theta_b^2) + w_s exp(-|p_i-p_j|^2 / 2 theta_g^2)
Eigen::MatrixXd pairwise_kernel(const Image<double>& image, const CrfConfig& config);

struct MeanFieldTrace {
  std::vector<double> max_normalization_error;  // per iteration, max |Q_bg + Q_fg - 1|
};

/// Parallel mean-field updates from Q = softmax(-unary):
///   E_i(l) = U_i(l) + sum_j k(i, j) Q_j(other label).
/// `unary` holds energies (N x 2) in row-major pixel order.
LabelDistribution mean_field(const LabelDistribution& unary, const Eigen::MatrixXd& kernel, int n_iters,
                             MeanFieldTrace* trace = nullptr);

/// Unary energies -log([1 - p, p]) with the configured probability floor.
LabelDistribution unary_from_probability(const Image<double>& prob, double floor);

/// Refines a foreground probability map using the image for the pairwise term.
/// Returns Q(foreground) per pixel.
Image<double> refine(const Image<double>& prob, const Image<double>& image, const CrfConfig& config,
                     MeanFieldTrace* trace = nullptr);

}  // namespace plseg
