#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "pwc/tensor.hpp"

namespace pwc {

/// 55-entry hue ramp: red-yellow 15, yellow-green 6, green-cyan 4,
/// cyan-blue 11, blue-magenta 13, magenta-red 6.
class ColorWheel {
 public:
  ColorWheel();
  std::size_t size() const { return table_.size(); }
  const std::array<double, 3>& operator[](std::size_t i) const { return table_[i]; }
  /// Colour in [0, 255] for direction angle `phi` (radians, of (-u, -v)) and
  /// saturation `s` in [0, 1].
  std::array<double, 3> color(double phi, double s) const;

 private:
  std::vector<std::array<double, 3>> table_;
};

struct ColorImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
  std::size_t non_finite = 0;     // pixels rendered black
  double max_norm = 0.0;          // normalisation actually used

  std::array<std::uint8_t, 3> at(std::size_t y, std::size_t x) const;
};

/// flow: 1 x 2 x H x W. Without max_norm, the 99th percentile of the finite
/// magnitudes is used. Non-finite vectors become black and are counted.
template <typename T>
ColorImage flow_to_color(const Tensor<T>& flow, std::optional<double> max_norm = std::nullopt);

void write_color_png(const std::filesystem::path& path, const ColorImage& image);

}  // namespace pwc
