#include "pwc/model.hpp"

#include <cstdlib>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pwc/ops.hpp"

namespace pwc {
namespace {

std::string level_name(const char* part, int level) {
  return std::string(part) + ".l" + std::to_string(level);
}

std::size_t conv3x3_params(std::size_t in, std::size_t out) { return 9 * in * out + out; }

int estimator_base_channels(const ModelConfig& cfg, int level) {
  return cost_volume_channels(cfg.search_range) + cfg.level_channels(level) +
         (level < cfg.num_levels ? 2 : 0);
}

template <typename T>
Var<T> conv_layer(const Var<T>& x, const ParameterStore<T>& params, const std::string& name,
                  const Conv2dOptions& opt) {
  return conv2d(x, params.get(name + ".weight"), params.get(name + ".bias"), opt);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (num_levels < 1) fail("num_levels must be >= 1");
  if (output_level < 1 || output_level > num_levels) {
    fail("output_level must lie in [1, num_levels]");
  }
  if (search_range < 0) fail("search_range must be >= 0");
  if (learned_features) {
    if (static_cast<int>(pyramid_channels.size()) != num_levels) {
      fail("pyramid_channels has " + std::to_string(pyramid_channels.size()) +
           " entries but num_levels is " + std::to_string(num_levels));
    }
    if (pyramid_convs_per_level < 1) fail("pyramid_convs_per_level must be >= 1");
  }
  for (int c : pyramid_channels)
    if (c <= 0) fail("pyramid channel counts must be positive");
  if (estimator_channels.empty()) fail("estimator_channels must not be empty");
  for (int c : estimator_channels)
    if (c <= 0) fail("estimator channel counts must be positive");
  if (use_context) {
    if (context_dilations.size() != context_channels.size() + 1) {
      fail("context_dilations needs one entry per context layer including the flow output");
    }
    for (int c : context_channels)
      if (c <= 0) fail("context channel counts must be positive");
    for (int d : context_dilations)
      if (d < 1) fail("context dilations must be >= 1");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in (0, 1)");
}

int ModelConfig::level_channels(int level) const {
  if (level == 0) return 3;
  if (!learned_features) return 3;
  return pyramid_channels.at(static_cast<std::size_t>(level - 1));
}

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> specs;
  if (cfg.learned_features) {
    for (int l = 1; l <= cfg.num_levels; ++l) {
      int in = cfg.level_channels(l - 1);
      for (int i = 0; i < cfg.pyramid_convs_per_level; ++i) {
        specs.push_back({level_name("pyramid", l) + ".conv" + std::to_string(i), in,
                         cfg.level_channels(l)});
        in = cfg.level_channels(l);
      }
    }
  }
  int last_hidden = 0;
  for (int l = cfg.num_levels; l >= cfg.output_level; --l) {
    int in = estimator_base_channels(cfg, l);
    for (std::size_t i = 0; i < cfg.estimator_channels.size(); ++i) {
      const int out = cfg.estimator_channels[i];
      specs.push_back({level_name("estimator", l) + ".conv" + std::to_string(i), in, out});
      in = cfg.use_dense ? in + out : out;
      last_hidden = out;
    }
    specs.push_back({level_name("estimator", l) + ".flow", in, 2});
  }
  if (cfg.use_context) {
    int in = 2 + last_hidden;
    for (std::size_t i = 0; i < cfg.context_channels.size(); ++i) {
      specs.push_back({"context.conv" + std::to_string(i), in, cfg.context_channels[i]});
      in = cfg.context_channels[i];
    }
    specs.push_back({"context.flow", in, 2});
  }
  return specs;
}

std::size_t count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  if (cfg.learned_features) {
    for (int l = 1; l <= cfg.num_levels; ++l) {
      const std::size_t prev = cfg.level_channels(l - 1), c = cfg.level_channels(l);
      n += conv3x3_params(prev, c) + (cfg.pyramid_convs_per_level - 1) * conv3x3_params(c, c);
    }
  }
  const auto& e = cfg.estimator_channels;
  std::size_t width_sum = 0;
  for (int w : e) width_sum += w;
  for (int l = cfg.output_level; l <= cfg.num_levels; ++l) {
    const std::size_t base = estimator_base_channels(cfg, l);
    if (cfg.use_dense) {
      // Layer i sees the base input plus every earlier layer's output.
      std::size_t seen = base;
      for (int w : e) {
        n += 9 * seen * w + w;
        seen += w;
      }
      n += conv3x3_params(base + width_sum, 2);
    } else {
      n += conv3x3_params(base, e.front());
      for (std::size_t i = 1; i < e.size(); ++i) n += conv3x3_params(e[i - 1], e[i]);
      n += conv3x3_params(e.back(), 2);
    }
  }
  if (cfg.use_context) {
    const auto& c = cfg.context_channels;
    std::size_t prev = 2 + e.back();
    for (int w : c) {
      n += conv3x3_params(prev, w);
      prev = w;
    }
    n += conv3x3_params(prev, 2);
  }
  return n;
}

template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
  ParameterStore<T> store;
  for (const auto& spec : layer_specs(cfg)) {
    const std::size_t in = spec.in_channels, out = spec.out_channels;
    double bound = gain * std::sqrt(3.0 / static_cast<double>(9 * in));
    // Flow heads start near zero. At full He scale the untrained model
    // predicts large random flow, and the cheapest way for training to undo
    // that is shrinking the whole pyramid, which starves the cost volume.
    if (spec.name.ends_with(".flow")) bound *= kFlowHeadInitScale;
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> w({out, in, 3, 3});
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
    store.add(spec.name + ".weight", std::move(w));
    store.add(spec.name + ".bias", Tensor<T>({out}));
  }
  return store;
}

template <typename T>
void check_parameters(const ModelConfig& cfg, const ParameterStore<T>& params) {
  const auto specs = layer_specs(cfg);
  if (params.size() != 2 * specs.size()) {
    throw DimensionError("parameters hold " + std::to_string(params.size()) +
                                " tensors but the config needs " +
                                std::to_string(2 * specs.size()));
  }
  for (const auto& s : specs) {
    const Shape w{std::size_t(s.out_channels), std::size_t(s.in_channels), 3, 3};
    const Shape b{std::size_t(s.out_channels)};
    for (const auto& [name, shape] : {std::pair{s.name + ".weight", w}, std::pair{s.name + ".bias", b}}) {
      if (!params.contains(name)) throw std::invalid_argument("missing parameter " + name);
      if (params.get(name).shape() != shape) {
        throw DimensionError("parameter " + name + " has shape " +
                                    shape_to_string(params.get(name).shape()) + ", config needs " +
                                    shape_to_string(shape));
      }
    }
  }
}

template <typename T>
FeaturePyramid<T> extract_pyramid(const Var<T>& image, const ModelConfig& cfg,
                                  const ParameterStore<T>& params) {
  require_rank4(image.value(), "extract_pyramid");
  const T slope = static_cast<T>(cfg.leaky_slope);
  FeaturePyramid<T> pyr;
  pyr.levels.push_back(image);
  for (int l = 1; l <= cfg.num_levels; ++l) {
    const Tensor<T>& prev = pyr.levels.back().value();
    if (prev.height() < 2 || prev.width() < 2) {
      std::ostringstream os;
      os << "extract_pyramid: input " << image.value().height() << "x" << image.value().width()
         << " is too small for " << cfg.num_levels << " levels; level " << l
         << " would have to halve a " << prev.height() << "x" << prev.width()
         << " map (need at least " << (1 << cfg.num_levels) << " pixels per side)";
      throw DimensionError(os.str());
    }
    Var<T> x = pyr.levels.back();
    if (cfg.learned_features) {
      const std::string base = level_name("pyramid", l);
      for (int i = 0; i < cfg.pyramid_convs_per_level; ++i) {
        const auto opt = i == 0 ? Conv2dOptions::halving3x3() : Conv2dOptions::same3x3();
        x = leaky_relu(conv_layer(x, params, base + ".conv" + std::to_string(i), opt), slope);
      }
    } else {
      x = avg_pool2x(x);
    }
    pyr.levels.push_back(x);
  }
  return pyr;
}

template <typename T>
std::pair<FlowField<T>, Var<T>> estimate_level(const CostVolume<T>& cv, const Var<T>& c1,
                                               const std::optional<FlowField<T>>& upflow,
                                               int level, const ModelConfig& cfg,
                                               const ParameterStore<T>& params) {
  if (upflow && upflow->scale != FlowScale::internal_scale) {
    throw std::invalid_argument("estimate_level: upsampled flow must be at internal scale");
  }
  const T slope = static_cast<T>(cfg.leaky_slope);
  const std::string base = level_name("estimator", level);
  std::vector<Var<T>> parts{cv.tensor, c1};
  if (upflow) parts.push_back(upflow->tensor);
  Var<T> x = concat_channels<T>(parts);
  Var<T> hidden;
  for (std::size_t i = 0; i < cfg.estimator_channels.size(); ++i) {
    hidden = leaky_relu(
        conv_layer(x, params, base + ".conv" + std::to_string(i), Conv2dOptions::same3x3()), slope);
    if (cfg.use_dense) {
      std::vector<Var<T>> dense{x, hidden};
      x = concat_channels<T>(dense);
    } else {
      x = hidden;
    }
  }
  Var<T> flow = conv_layer(x, params, base + ".flow", Conv2dOptions::same3x3());
  if (cfg.use_residual && upflow) flow = add(flow, upflow->tensor);
  return {FlowField<T>{flow, FlowScale::internal_scale, level}, hidden};
}

template <typename T>
FlowField<T> context_refine(const FlowField<T>& flow, const Var<T>& prefinal,
                            const ModelConfig& cfg, const ParameterStore<T>& params) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  std::vector<Var<T>> parts{flow.tensor, prefinal};
  Var<T> x = concat_channels<T>(parts);
  const std::size_t hidden = cfg.context_channels.size();
  for (std::size_t i = 0; i < hidden; ++i) {
    x = leaky_relu(conv_layer(x, params, "context.conv" + std::to_string(i),
                              Conv2dOptions::same3x3(cfg.context_dilations[i])),
                   slope);
  }
  Var<T> increment =
      conv_layer(x, params, "context.flow", Conv2dOptions::same3x3(cfg.context_dilations[hidden]));
  return {add(flow.tensor, increment), flow.scale, flow.level};
}

template <typename T>
MultiLevelFlow<T> forward(const Var<T>& image1, const Var<T>& image2, const ModelConfig& cfg,
                          const ParameterStore<T>& params) {
  check_parameters(cfg, params);
  const Tensor<T>& a = image1.value();
  require_rank4(a, "forward image1");
  if (a.shape() != image2.value().shape()) {
    throw DimensionError("forward: image shapes differ " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(image2.value().shape()));
  }
  const std::size_t H = a.height(), W = a.width();
  const std::size_t m = std::size_t{1} << cfg.output_level;
  const std::size_t Hp = (H + m - 1) / m * m, Wp = (W + m - 1) / m * m;

  // Images enter centred on mid-grey, so padding reads as grey and the first
  // features are not dominated by the mean intensity.
  const auto centred = [&](const Var<T>& img) {
    return add(img, make_constant(Tensor<T>(img.shape(), static_cast<T>(-kImageCentre))));
  };
  const auto pyr1 = extract_pyramid(pad_spatial(centred(image1), Hp, Wp), cfg, params);
  const auto pyr2 = extract_pyramid(pad_spatial(centred(image2), Hp, Wp), cfg, params);

  MultiLevelFlow<T> out;
  Var<T> prefinal;
  for (int l = cfg.num_levels; l >= cfg.output_level; --l) {
    const Var<T>& c1 = pyr1.levels[l];
    const Var<T>& c2 = pyr2.levels[l];
    std::optional<FlowField<T>> upflow;
    Var<T> cw = c2;
    if (l < cfg.num_levels) {
      const Tensor<T>& shape = c1.value();
      upflow = FlowField<T>{
          upsample2x_bilinear(out.flows.at(l + 1).tensor, shape.height(), shape.width()),
          FlowScale::internal_scale, l};
      if (cfg.use_warping) {
        cw = warp(c2, scale_flow(*upflow, static_cast<T>(internal_to_pixels(l))));
      }
    }
    const auto cv = correlation_cost_volume(c1, cw, cfg.search_range);
    auto [flow, hidden] = estimate_level(cv, c1, upflow, l, cfg, params);
    out.flows[l] = flow;
    if (l == cfg.output_level) prefinal = hidden;
  }
  out.prefinal = prefinal;

  const int l0 = cfg.output_level;
  if (cfg.use_context) {
    out.unrefined = out.flows.at(l0);
    out.flows[l0] = context_refine(out.flows.at(l0), prefinal, cfg, params);
  }

  FlowField<T> full = scale_flow(out.flows.at(l0), static_cast<T>(internal_to_pixels(l0)));
  for (int l = l0; l > 0; --l) full = upsample_and_rescale_flow(full);
  full.tensor = crop_spatial(full.tensor, H, W);
  out.final = full;
  return out;
}

int context_receptive_field(const ModelConfig& cfg) {
  int rf = 1;
  for (int d : cfg.context_dilations) rf += 2 * d;
  return rf;
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names{
      "full",         "feature-up",   "feature-down", "image",      "range-0",
      "range-2",      "range-4",      "range-6",      "levels-5",   "levels-6",
      "levels-7",     "estimator-up", "estimator-down", "no-dense", "no-context",
      "no-warping",   "residual",     "small"};
  return names;
}

ModelConfig apply_ablation(ModelConfig cfg, const std::string& variant) {
  auto set_levels = [&cfg](int pyramid_levels) {
    // Pyramid level count includes the image level.
    const int L = pyramid_levels - 1;
    cfg.num_levels = L;
    const std::vector<int> defaults = ModelConfig{}.pyramid_channels;
    cfg.pyramid_channels.assign(defaults.begin(), defaults.begin() + std::min<int>(L, 6));
    while (static_cast<int>(cfg.pyramid_channels.size()) < L)
      cfg.pyramid_channels.push_back(cfg.pyramid_channels.back());
  };
  if (variant == "full") {
  } else if (variant == "feature-up") {
    cfg.pyramid_convs_per_level = 3;
  } else if (variant == "feature-down") {
    cfg.pyramid_convs_per_level = 1;
  } else if (variant == "image") {
    cfg.learned_features = false;
  } else if (variant.rfind("range-", 0) == 0 && variant.size() == 7 &&
             std::string("0246").find(variant[6]) != std::string::npos) {
    cfg.search_range = variant[6] - '0';
  } else if (variant == "levels-5") {
    set_levels(5);
  } else if (variant == "levels-6") {
    set_levels(6);
  } else if (variant == "levels-7") {
    set_levels(7);
  } else if (variant == "estimator-up") {
    cfg.estimator_channels = {128, 128, 128, 96, 96, 64, 32};
  } else if (variant == "estimator-down") {
    cfg.estimator_channels = {128, 96, 64, 32};
  } else if (variant == "no-dense" || variant == "small") {
    cfg.use_dense = false;
  } else if (variant == "no-context") {
    cfg.use_context = false;
  } else if (variant == "no-warping") {
    cfg.use_warping = false;
  } else if (variant == "residual") {
    cfg.use_residual = true;
  } else {
    std::string valid;
    for (const auto& n : ablation_variants()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown ablation variant '" + variant + "'; valid: " + valid);
  }
  cfg.validate();
  return cfg;
}

#define PWC_INSTANTIATE_MODEL(T)                                                             \
  template ParameterStore<T> init_parameters<T>(const ModelConfig&, std::uint64_t);          \
  template void check_parameters<T>(const ModelConfig&, const ParameterStore<T>&);           \
  template FeaturePyramid<T> extract_pyramid(const Var<T>&, const ModelConfig&,              \
                                             const ParameterStore<T>&);                      \
  template std::pair<FlowField<T>, Var<T>> estimate_level(                                   \
      const CostVolume<T>&, const Var<T>&, const std::optional<FlowField<T>>&, int,          \
      const ModelConfig&, const ParameterStore<T>&);                                         \
  template FlowField<T> context_refine(const FlowField<T>&, const Var<T>&, const ModelConfig&, \
                                       const ParameterStore<T>&);                            \
  template MultiLevelFlow<T> forward(const Var<T>&, const Var<T>&, const ModelConfig&,       \
                                     const ParameterStore<T>&);

PWC_INSTANTIATE_MODEL(float)
PWC_INSTANTIATE_MODEL(double)

}  // namespace pwc
