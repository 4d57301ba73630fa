#pragma once

// Shared helpers and independent oracles for the unit tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "pwc/ops.hpp"
#include "pwc/tensor.hpp"

namespace pwc::testing {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("pwc_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Direct nested-loop convolution with explicit zero padding.
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& bias,
                       const Conv2dOptions& o) {
  const long H = in.height(), W = in.width(), K = w.dim(2);
  const long oh = (H + o.pad_top + o.pad_bottom - o.dilation * (K - 1) - 1) / o.stride + 1;
  const long ow = (W + o.pad_left + o.pad_right - o.dilation * (K - 1) - 1) / o.stride + 1;
  Tensor<T> out({in.batch(), w.dim(0), std::size_t(oh), std::size_t(ow)});
  for (std::size_t b = 0; b < in.batch(); ++b)
    for (std::size_t oc = 0; oc < w.dim(0); ++oc)
      for (long y = 0; y < oh; ++y)
        for (long x = 0; x < ow; ++x) {
          double acc = bias[oc];
          for (std::size_t c = 0; c < in.channels(); ++c)
            for (long ky = 0; ky < K; ++ky)
              for (long kx = 0; kx < K; ++kx) {
                const long iy = y * o.stride - o.pad_top + ky * o.dilation;
                const long ix = x * o.stride - o.pad_left + kx * o.dilation;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += double(w.at(oc, c, ky, kx)) * double(in.at(b, c, iy, ix));
              }
          out.at(b, oc, y, x) = static_cast<T>(acc);
        }
  return out;
}

// Triple-loop correlation: (1/N) sum_c c1(x) * cw(x + o), zero outside.
template <typename T>
Tensor<T> naive_cost_volume(const Tensor<T>& c1, const Tensor<T>& cw, int d) {
  const long H = c1.height(), W = c1.width(), N = c1.channels(), D = 2 * d + 1;
  Tensor<T> out({c1.batch(), std::size_t(D * D), std::size_t(H), std::size_t(W)});
  for (std::size_t b = 0; b < c1.batch(); ++b)
    for (int dy = -d; dy <= d; ++dy)
      for (int dx = -d; dx <= d; ++dx)
        for (long y = 0; y < H; ++y)
          for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            const long y2 = y + dy, x2 = x + dx;
            if (y2 >= 0 && y2 < H && x2 >= 0 && x2 < W)
              for (long c = 0; c < N; ++c) acc += double(c1.at(b, c, y, x)) * double(cw.at(b, c, y2, x2));
            out.at(b, (dy + d) * D + (dx + d), y, x) = static_cast<T>(acc / N);
          }
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace pwc::testing
