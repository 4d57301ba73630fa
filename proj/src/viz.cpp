#include "pwc/viz.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pwc/io.hpp"

namespace pwc {
namespace {
constexpr double kPi = 3.14159265358979323846;
}

ColorWheel::ColorWheel() {
  const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  for (int i = 0; i < RY; ++i) table_.push_back({255, 255.0 * i / RY, 0});
  for (int i = 0; i < YG; ++i) table_.push_back({255 - 255.0 * i / YG, 255, 0});
  for (int i = 0; i < GC; ++i) table_.push_back({0, 255, 255.0 * i / GC});
  for (int i = 0; i < CB; ++i) table_.push_back({0, 255 - 255.0 * i / CB, 255});
  for (int i = 0; i < BM; ++i) table_.push_back({255.0 * i / BM, 0, 255});
  for (int i = 0; i < MR; ++i) table_.push_back({255, 0, 255 - 255.0 * i / MR});
}

std::array<double, 3> ColorWheel::color(double phi, double s) const {
  // The whole circle maps onto all entries, wrapping from the last to the
  // first, so equal angle steps are equal index steps everywhere.
  const double n = static_cast<double>(table_.size());
  double fk = (phi / kPi + 1.0) / 2.0 * n;
  fk = std::fmod(fk, n);
  if (fk < 0) fk += n;
  const std::size_t k0 = static_cast<std::size_t>(fk) % table_.size();
  const std::size_t k1 = (k0 + 1) % table_.size();
  const double f = fk - std::floor(fk);
  std::array<double, 3> out;
  for (int c = 0; c < 3; ++c) {
    const double col = ((1 - f) * table_[k0][c] + f * table_[k1][c]) / 255.0;
    out[c] = 255.0 * (1 - s * (1 - col));
  }
  return out;
}

std::array<std::uint8_t, 3> ColorImage::at(std::size_t y, std::size_t x) const {
  const std::size_t i = 3 * (y * width + x);
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

template <typename T>
ColorImage flow_to_color(const Tensor<T>& flow, std::optional<double> max_norm) {
  require_rank4(flow, "flow_to_color");
  if (flow.batch() != 1 || flow.channels() != 2) {
    throw DimensionError("flow_to_color: expected 1x2xHxW, got " + shape_to_string(flow.shape()));
  }
  if (max_norm && !(*max_norm > 0.0)) throw std::invalid_argument("flow_to_color: max_norm must be > 0");
  const std::size_t H = flow.height(), W = flow.width();
  ColorImage img;
  img.width = W;
  img.height = H;
  img.rgb.assign(3 * H * W, 0);

  if (max_norm) {
    img.max_norm = *max_norm;
  } else {
    std::vector<double> mags;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double u = flow.at(0, 0, y, x), v = flow.at(0, 1, y, x);
        if (std::isfinite(u) && std::isfinite(v)) mags.push_back(std::hypot(u, v));
      }
    double p99 = 0.0;
    if (!mags.empty()) {
      const std::size_t k = static_cast<std::size_t>(std::ceil(0.99 * double(mags.size()))) - 1;
      std::nth_element(mags.begin(), mags.begin() + k, mags.end());
      p99 = mags[k];
    }
    img.max_norm = p99 > 0.0 ? p99 : 1.0;
  }

  static const ColorWheel wheel;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double u = flow.at(0, 0, y, x), v = flow.at(0, 1, y, x);
      std::uint8_t* px = &img.rgb[3 * (y * W + x)];
      if (!std::isfinite(u) || !std::isfinite(v)) {
        ++img.non_finite;
        continue;
      }
      const double s = std::min(1.0, std::hypot(u, v) / img.max_norm);
      const auto c = wheel.color(std::atan2(-v, -u), s);
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::lround(c[k]));
    }
  return img;
}

void write_color_png(const std::filesystem::path& path, const ColorImage& image) {
  write_png_rgb8(path, image.width, image.height, image.rgb);
}

template ColorImage flow_to_color(const Tensor<float>&, std::optional<double>);
template ColorImage flow_to_color(const Tensor<double>&, std::optional<double>);

}  // namespace pwc
