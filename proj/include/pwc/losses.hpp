#pragma once

// Multi-scale training objectives and supervision preparation.

#include <map>

#include "pwc/model.hpp"

namespace pwc {

struct LossConfig {
  std::map<int, double> alpha{{6, 0.32}, {5, 0.08}, {4, 0.02}, {3, 0.01}, {2, 0.005}};
  double gamma = 0.0004;
  double q = 0.4;
  double epsilon = 0.01;
  double flow_scale = kFlowScale;

  void validate() const;
  double alpha_at(int level) const;

  bool operator==(const LossConfig&) const = default;
};

template <typename T>
struct LevelSupervision {
  Tensor<T> flow;  // B x 2 x h x w, internal scale
  Tensor<T> mask;  // B x 1 x h x w, 1 = supervised
};

template <typename T>
using Supervision = std::map<int, LevelSupervision<T>>;

/// gt: B x 2 x H x W in pixels, mask: B x 1 x H x W. Level l is the gt divided
/// by flow_scale and mean-pooled 2x2 over valid pixels l times; a pooled pixel
/// is valid when any of its four sources is.
template <typename T>
Supervision<T> prepare_supervision(const Tensor<T>& gt, const Tensor<T>& mask, int first_level,
                                   int last_level, double flow_scale = kFlowScale);

/// sum_x mask(x) * ||pred(x) - gt(x)||_2, summed over the batch.
template <typename T>
Var<T> masked_epe_sum(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask);

/// sum_x mask(x) * (|du| + |dv| + epsilon)^q, summed over the batch.
template <typename T>
Var<T> masked_robust_sum(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                         double epsilon, double q);

/// sum_l alpha_l * (masked EPE at l) / B + gamma * ||theta||^2.
/// The output level uses the context-refined flow when present.
template <typename T>
Var<T> multiscale_loss(const MultiLevelFlow<T>& pred, const Supervision<T>& sup,
                       const ParameterStore<T>& params, const LossConfig& cfg);

/// As multiscale_loss with the robust (|.|_1 + epsilon)^q penalty.
template <typename T>
Var<T> robust_loss(const MultiLevelFlow<T>& pred, const Supervision<T>& sup,
                   const ParameterStore<T>& params, const LossConfig& cfg);

/// gamma * sum of squared parameters.
template <typename T>
Var<T> weight_decay(const ParameterStore<T>& params, double gamma);

}  // namespace pwc
