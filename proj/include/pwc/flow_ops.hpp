#pragma once

// Flow-specific differentiable operators: bilinear feature warping, the
// partial correlation cost volume and flow resampling between levels.

#include <cstddef>
#include <optional>

#include "pwc/autodiff.hpp"

namespace pwc {

/// Network flows are regressed at ground truth / kFlowScale.
inline constexpr double kFlowScale = 20.0;

enum class FlowScale { pixel_units, internal_scale };

/// 2-channel (u, v) field. `level` is the pyramid level whose pixel grid the
/// field lives on (0 = input resolution).
template <typename T>
struct FlowField {
  Var<T> tensor;
  FlowScale scale = FlowScale::pixel_units;
  int level = 0;
};

template <typename T>
struct CostVolume {
  Var<T> tensor;  // B x (2d+1)^2 x H x W
  int search_range = 0;
};

/// Channel index of displacement (dy, dx); row-major over dy then dx.
constexpr int cost_volume_channel(int dy, int dx, int search_range) {
  return (dy + search_range) * (2 * search_range + 1) + (dx + search_range);
}

constexpr int cost_volume_channels(int search_range) {
  return (2 * search_range + 1) * (2 * search_range + 1);
}

/// output(x) = features(x + flow(x)), bilinear, zero outside the map.
/// `flow` is B x 2 x H x W in pixel units of the feature grid.
template <typename T>
Var<T> warp(const Var<T>& features, const Var<T>& flow);

template <typename T>
Var<T> warp(const Var<T>& features, const FlowField<T>& flow);

/// channel(dy, dx) at x = (1/N) <c1(x), cw(x + (dx, dy))>, zero when the
/// displaced position leaves the map.
template <typename T>
CostVolume<T> correlation_cost_volume(const Var<T>& c1, const Var<T>& cw, int search_range);

/// x2 bilinear upsampling with values doubled, so pixel displacements keep
/// their meaning on the finer grid. Requires pixel units. The target extent
/// defaults to twice the input and may be one larger per axis.
template <typename T>
FlowField<T> upsample_and_rescale_flow(const FlowField<T>& coarse,
                                       std::optional<std::size_t> out_h = std::nullopt,
                                       std::optional<std::size_t> out_w = std::nullopt);

/// Multiplies by `factor`. Internal-scale flow on level l multiplied by
/// 20 / 2^l becomes pixel units of that level.
template <typename T>
FlowField<T> scale_flow(const FlowField<T>& flow, T factor);

/// Factor converting internal-scale flow to pixel units of `level`.
inline double internal_to_pixels(int level) {
  return kFlowScale / static_cast<double>(1 << level);
}

}  // namespace pwc
