#include "plseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace plseg {

void CrfConfig::validate() const {
  if (n_iters < 0) throw InvalidArgument("crf.n_iters must be >= 0");
  if (w_appearance < 0.0 || w_smooth < 0.0) throw InvalidArgument("crf weights must be non-negative");
  if (!(theta_alpha > 0.0) || !(theta_beta > 0.0) || !(theta_gamma > 0.0)) {
    throw InvalidArgument("crf bandwidths must be positive");
  }
  if (!(prob_floor > 0.0) || prob_floor >= 0.5) throw InvalidArgument("crf.prob_floor must be in (0, 0.5)");
  if (max_pixels < 1) throw InvalidArgument("crf.max_pixels must be positive");
}

Eigen::MatrixXd pairwise_kernel(const Image<double>& image, const CrfConfig& config) {
  config.validate();
  const Eigen::Index w = image.cols();
  const Eigen::Index n = image.size();
  if (n > config.max_pixels) {
    throw InvalidArgument("crf: " + std::to_string(n) + " pixels exceeds max_pixels " +
                          std::to_string(config.max_pixels));
  }
  const double ia = 1.0 / (2.0 * config.theta_alpha * config.theta_alpha);
  const double ib = 1.0 / (2.0 * config.theta_beta * config.theta_beta);
  const double ig = 1.0 / (2.0 * config.theta_gamma * config.theta_gamma);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  const double* intensity = image.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double yi = static_cast<double>(i / w);
    const double xi = static_cast<double>(i % w);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dy = yi - static_cast<double>(j / w);
      const double dx = xi - static_cast<double>(j % w);
      const double d2 = dy * dy + dx * dx;
      const double di = intensity[i] - intensity[j];
      double v = 0.0;
      if (config.w_appearance > 0.0) v += config.w_appearance * std::exp(-d2 * ia - di * di * ib);
      if (config.w_smooth > 0.0) v += config.w_smooth * std::exp(-d2 * ig);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

LabelDistribution unary_from_probability(const Image<double>& prob, double floor) {
  LabelDistribution u(prob.size(), 2);
  const double* p = prob.data();
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw InvalidArgument("crf: probability outside [0,1]");
    u(i, 0) = -std::log(std::max(1.0 - p[i], floor));
    u(i, 1) = -std::log(std::max(p[i], floor));
  }
  return u;
}

namespace {

void normalize_from_energy(double e0, double e1, double& q0, double& q1) {
  const double m = std::min(e0, e1);
  const double a0 = std::exp(-(e0 - m));
  const double a1 = std::exp(-(e1 - m));
  const double z = a0 + a1;
  q0 = a0 / z;
  q1 = a1 / z;
}

}  // namespace

LabelDistribution mean_field(const LabelDistribution& unary, const Eigen::MatrixXd& kernel, int n_iters,
                             MeanFieldTrace* trace) {
  const Eigen::Index n = unary.rows();
  if (kernel.rows() != n || kernel.cols() != n) throw ShapeMismatch("mean_field: kernel size mismatch");
  if (n_iters < 0) throw InvalidArgument("mean_field: n_iters must be >= 0");
  LabelDistribution q(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) normalize_from_energy(unary(i, 0), unary(i, 1), q(i, 0), q(i, 1));

  LabelDistribution next(n, 2);
  for (int it = 0; it < n_iters; ++it) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Both channels are accumulated with the same operation order so that
      // swapping labels swaps results exactly.
      double m0 = 0.0;
      double m1 = 0.0;
      const double* krow = kernel.col(i).data();  // symmetric
      for (Eigen::Index j = 0; j < n; ++j) {
        m0 += krow[j] * q(j, 1);
        m1 += krow[j] * q(j, 0);
      }
      normalize_from_energy(unary(i, 0) + m0, unary(i, 1) + m1, next(i, 0), next(i, 1));
      worst = std::max(worst, std::abs(next(i, 0) + next(i, 1) - 1.0));
    }
    q.swap(next);
    if (trace) trace->max_normalization_error.push_back(worst);
  }
  return q;
}

Image<double> refine(const Image<double>& prob, const Image<double>& image, const CrfConfig& config,
                     MeanFieldTrace* trace) {
  config.validate();
  if (prob.rows() != image.rows() || prob.cols() != image.cols()) {
    throw ShapeMismatch("crf: probability map and image shapes differ");
  }
  const LabelDistribution unary = unary_from_probability(prob, config.prob_floor);
  const bool coupled = config.n_iters > 0 && (config.w_appearance > 0.0 || config.w_smooth > 0.0);
  LabelDistribution q;
  if (coupled) {
    q = mean_field(unary, pairwise_kernel(image, config), config.n_iters, trace);
  } else {
    q = mean_field(unary, Eigen::MatrixXd::Zero(unary.rows(), unary.rows()), 0, nullptr);
    if (trace) trace->max_normalization_error.assign(static_cast<std::size_t>(config.n_iters), 0.0);
  }
  Image<double> out(prob.rows(), prob.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = q(i, 1);
  return out;
}

}  // namespace plseg
