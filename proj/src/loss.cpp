#include "plseg/loss.hpp"

#include "plseg/mask_ops.hpp"

namespace plseg {

template <typename Scalar>
Scalar soft_dice_loss(const Image<Scalar>& pred, const Mask2& target, double eps, Image<Scalar>* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeMismatch("soft_dice_loss: prediction and target shapes differ");
  }
  if (!(eps > 0.0)) throw InvalidArgument("soft_dice_loss: eps must be positive");
  const Image<Scalar> t = target.template cast<Scalar>();
  const Scalar e = static_cast<Scalar>(eps);
  const Scalar inter = (pred * t).sum();
  const Scalar num = Scalar(2) * inter + e;
  const Scalar den = pred.sum() + t.sum() + e;
  if (grad) *grad = -(Scalar(2) * t * den - num) / (den * den);
  return Scalar(1) - num / den;
}

template <typename Scalar>
Scalar joint_loss(const NetworkOutputs<Scalar>& outputs, const Mask2& gt_mask, const LossWeights& weights,
                  const NetConfig& config, NetworkOutputs<Scalar>* grads, double eps) {
  if (weights.w_m < 0.0 || weights.w_b < 0.0 || weights.w_f < 0.0) {
    throw InvalidArgument("loss weights must be non-negative");
  }
  if (outputs.final_map.size() == 0) throw InvalidArgument("joint_loss: missing final map");
  for (int l = 0; l < kLevels; ++l) {
    if (outputs.region[l].size() == 0) throw InvalidArgument(std::string("joint_loss: missing region map ") + level_name(l));
    if (config.has_boundary_head(l) && !outputs.has_boundary(l)) {
      throw InvalidArgument(std::string("joint_loss: missing boundary map ") + level_name(l));
    }
  }
  if (grads) *grads = NetworkOutputs<Scalar>{};

  const auto wm = static_cast<Scalar>(weights.w_m);
  const auto wb = static_cast<Scalar>(weights.w_b);
  const auto wf = static_cast<Scalar>(weights.w_f);
  Scalar total(0);
  Image<Scalar> g;
  for (int l = 0; l < kLevels; ++l) {
    total += wm * soft_dice_loss(outputs.region[l], gt_mask, eps, grads ? &g : nullptr);
    if (grads) grads->region[l] = wm * g;
  }
  if (config.boundary_aware) {
    const Mask2 boundary = derive_boundary(gt_mask, config.boundary_thickness_px);
    for (int l = 0; l < kLevels; ++l) {
      if (!config.has_boundary_head(l)) continue;
      total += wb * soft_dice_loss(outputs.boundary[l], boundary, eps, grads ? &g : nullptr);
      if (grads) grads->boundary[l] = wb * g;
    }
  }
  total += wf * soft_dice_loss(outputs.final_map, gt_mask, eps, grads ? &g : nullptr);
  if (grads) grads->final_map = wf * g;
  return total;
}

template float soft_dice_loss<float>(const Image<float>&, const Mask2&, double, Image<float>*);
template double soft_dice_loss<double>(const Image<double>&, const Mask2&, double, Image<double>*);
template float joint_loss<float>(const NetworkOutputs<float>&, const Mask2&, const LossWeights&, const NetConfig&,
                                 NetworkOutputs<float>*, double);
template double joint_loss<double>(const NetworkOutputs<double>&, const Mask2&, const LossWeights&,
                                   const NetConfig&, NetworkOutputs<double>*, double);

}  // namespace plseg
