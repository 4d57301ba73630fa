#pragma once

// Procedural flow samples: a random texture, an analytic motion, and the
// second frame obtained by resampling the texture along the inverse motion.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pwc/tensor.hpp"

namespace pwc {

enum class MotionKind { translate, rotate, zoom, affine_mix };
enum class TextureKind { random_dots, smoothed_noise };

std::string to_string(MotionKind kind);
std::string to_string(TextureKind kind);
MotionKind motion_kind_from_string(const std::string& name);
TextureKind texture_kind_from_string(const std::string& name);

/// Frames are 1 x 3 x H x W in [0, 1], flow is 1 x 2 x H x W in pixels
/// (u right, v down) with I1(x) = I2(x + flow(x)), mask is 1 x 1 x H x W.
struct Sample {
  Tensor<float> image1;
  Tensor<float> image2;
  Tensor<float> flow;
  Tensor<float> mask;

  std::size_t height() const { return image1.height(); }
  std::size_t width() const { return image1.width(); }
  /// Throws DimensionError unless all four fields share H x W.
  void validate() const;
};

struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  MotionKind motion = MotionKind::translate;
  double max_displacement = 8.0;  // pixels, over the whole frame
  TextureKind texture = TextureKind::smoothed_noise;
  bool occlusion = true;  // zero the mask where x + flow(x) leaves the frame
  double mask_drop_rate = 0.0;  // emulates sparse ground truth
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

/// x -> A (x - c) + c + t, with c the frame centre in pixel coordinates.
struct Motion {
  std::array<double, 4> a{1, 0, 0, 1};  // row-major 2x2
  std::array<double, 2> t{0, 0};

  static Motion translation(double tx, double ty);
  static Motion rotation(double radians);
  static Motion zoom(double scale);

  /// Displacement at pixel (x, y) of a frame with centre (cx, cy).
  std::array<double, 2> displacement(double x, double y, double cx, double cy) const;
};

/// Random motion of the given kind whose displacement magnitude stays within
/// max_displacement over the whole frame.
Motion draw_motion(const SynthSpec& spec, std::uint64_t seed);

/// Deterministic in spec (including its seed).
Sample gen_sample(const SynthSpec& spec);
/// As above with the motion fixed; the texture still comes from spec.seed.
Sample gen_sample(const SynthSpec& spec, const Motion& motion);

/// Sample i uses motion kinds[i % kinds.size()] and a seed derived from
/// (base.seed, i).
std::vector<Sample> gen_dataset(const SynthSpec& base, const std::vector<MotionKind>& kinds,
                                std::size_t count);

/// Mixes two 64-bit values into a well-spread seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct AugmentConfig {
  std::size_t crop_height = 0;  // 0 keeps the full extent
  std::size_t crop_width = 0;
  bool hflip = true;  // flip with probability 1/2

  bool operator==(const AugmentConfig&) const = default;
};

Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width);
/// Mirrors every field left-right and negates u.
Sample hflip(const Sample& s);
/// Random crop shared by all fields and an optional random flip. No noise is
/// added. Throws DimensionError if the crop exceeds the sample.
Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed);

/// Stacks samples of equal size into batched tensors.
Sample stack(const std::vector<Sample>& samples);

}  // namespace pwc
