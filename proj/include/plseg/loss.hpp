#pragma once

#include "plseg/siba_net.hpp"

namespace plseg {

inline constexpr double kLossDiceEps = 1.0;
inline constexpr double kEvalDiceEps = 1e-7;

struct LossWeights {
  double w_m = 1.0;  // region maps
  double w_b = 1.0;  // boundary maps
  double w_f = 1.0;  // final map

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps). When `grad` is non-null it
/// receives dLoss/dp.
template <typename Scalar>
Scalar soft_dice_loss(const Image<Scalar>& pred, const Mask2& target, double eps = kLossDiceEps,
                      Image<Scalar>* grad = nullptr);

/// Weighted sum of the soft Dice terms over every enabled output map. The
/// boundary target is derived from `gt_mask`. When `grads` is non-null it
/// receives dLoss/dp for every map (same layout as `outputs`).
template <typename Scalar>
Scalar joint_loss(const NetworkOutputs<Scalar>& outputs, const Mask2& gt_mask, const LossWeights& weights,
                  const NetConfig& config, NetworkOutputs<Scalar>* grads = nullptr, double eps = kLossDiceEps);

}  // namespace plseg
