#pragma once

// Pyramid, warping and cost-volume flow network, configured entirely by
// ModelConfig so every ablation variant is one config away.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pwc/flow_ops.hpp"
#include "pwc/parameter_store.hpp"

namespace pwc {

struct ModelConfig {
  int num_levels = 6;    // L: learned feature levels above the image level
  int output_level = 2;  // l0
  int search_range = 4;  // d
  std::vector<int> pyramid_channels{16, 32, 64, 96, 128, 192};
  int pyramid_convs_per_level = 2;
  std::vector<int> estimator_channels{128, 128, 96, 64, 32};
  std::vector<int> context_channels{128, 128, 128, 96, 64, 32};
  std::vector<int> context_dilations{1, 2, 4, 8, 16, 1, 1};
  bool use_dense = true;
  bool use_context = true;
  bool use_residual = false;
  bool use_warping = true;
  // false replaces the learned pyramid by 2x2-mean image pyramids.
  bool learned_features = true;
  double leaky_slope = 0.1;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// Feature channels at pyramid level `level` (1-based).
  int level_channels(int level) const;

  bool operator==(const ModelConfig&) const = default;
};

/// forward subtracts this from both images before the pyramid.
inline constexpr double kImageCentre = 0.5;
/// Scale of the flow output layers' init relative to the He bound.
inline constexpr double kFlowHeadInitScale = 0.01;

/// One 3x3 convolution of the network.
struct LayerSpec {
  std::string name;  // parameter prefix; weights are "<name>.weight"
  int in_channels;
  int out_channels;
};

/// Every convolution the configured model instantiates, in parameter order.
std::vector<LayerSpec> layer_specs(const ModelConfig& cfg);

/// Weights + biases, from closed-form per-component arithmetic.
std::size_t count_parameters(const ModelConfig& cfg);

/// Fan-in scaled uniform initialisation, biases zero; the ".flow" layers are
/// scaled by kFlowHeadInitScale. Values are drawn in double precision so
/// float and double stores start from identical weights.
template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// Throws DimensionError if names or shapes differ from the config.
template <typename T>
void check_parameters(const ModelConfig& cfg, const ParameterStore<T>& params);

template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;  // levels[0] is the image
};

template <typename T>
struct MultiLevelFlow {
  std::map<int, FlowField<T>> flows;  // internal scale, levels l0..L
  FlowField<T> final;                 // pixel units at input resolution
  Var<T> prefinal;                    // last hidden estimator layer at l0
  std::optional<FlowField<T>> unrefined;  // l0 estimate before the context network
};

template <typename T>
FeaturePyramid<T> extract_pyramid(const Var<T>& image, const ModelConfig& cfg,
                                  const ParameterStore<T>& params);

/// Returns (flow at internal scale, last hidden features).
template <typename T>
std::pair<FlowField<T>, Var<T>> estimate_level(const CostVolume<T>& cv, const Var<T>& c1,
                                               const std::optional<FlowField<T>>& upflow,
                                               int level, const ModelConfig& cfg,
                                               const ParameterStore<T>& params);

template <typename T>
FlowField<T> context_refine(const FlowField<T>& flow, const Var<T>& prefinal,
                            const ModelConfig& cfg, const ParameterStore<T>& params);

/// Images are B x 3 x H x W. Sides not divisible by 2^l0 are zero-padded and
/// the full-resolution flow is cropped back.
template <typename T>
MultiLevelFlow<T> forward(const Var<T>& image1, const Var<T>& image2, const ModelConfig& cfg,
                          const ParameterStore<T>& params);

/// Receptive field of the context network's dilated 3x3 stack, in pixels.
int context_receptive_field(const ModelConfig& cfg);

/// Names accepted by apply_ablation.
const std::vector<std::string>& ablation_variants();

/// Derives a variant config. Throws std::invalid_argument listing valid
/// names for unknown variants.
ModelConfig apply_ablation(ModelConfig base, const std::string& variant);

}  // namespace pwc
