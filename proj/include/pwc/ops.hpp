#pragma once

// Generic differentiable building blocks. All image-like operands are
// B x C x H x W.

#include <cstddef>
#include <span>
#include <vector>

#include "pwc/autodiff.hpp"

namespace pwc {

struct Conv2dOptions {
  int stride = 1;
  int pad_top = 0;
  int pad_bottom = 0;
  int pad_left = 0;
  int pad_right = 0;
  int dilation = 1;

  static Conv2dOptions symmetric(int stride, int padding, int dilation = 1) {
    return {stride, padding, padding, padding, padding, dilation};
  }
  /// Stride-1 3x3 convolution that preserves spatial size.
  static Conv2dOptions same3x3(int dilation = 1) {
    return symmetric(1, dilation, dilation);
  }
  /// Stride-2 3x3 convolution with output extent floor(n / 2).
  static Conv2dOptions halving3x3() { return {2, 1, 0, 1, 0, 1}; }
};

/// Output extent along one axis; throws DimensionError if it would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int pad_lo,
                               int pad_hi, int stride, int dilation);

/// weight: Out x In x k x k, bias: Out.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              const Conv2dOptions& opt);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

/// Bilinear x2 upsampling, half-pixel centres (source = (dst + 0.5) / 2 - 0.5),
/// clamped at the borders. The optional target extent may exceed 2H / 2W by
/// one so odd-sized finer levels can be matched; extra rows clamp to the edge.
template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x);
template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// 2x2 mean pooling, output floor(H/2) x floor(W/2).
template <typename T>
Var<T> avg_pool2x(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

/// Zero-extends at the bottom / right.
template <typename T>
Var<T> pad_spatial(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// Keeps the top-left out_h x out_w window.
template <typename T>
Var<T> crop_spatial(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// Scalar sum of squared entries.
template <typename T>
Var<T> sum_squares(const Var<T>& x);

/// Scalar sum of all entries.
template <typename T>
Var<T> sum(const Var<T>& x);

/// Scalar <x, weights> with a constant weight tensor.
template <typename T>
Var<T> dot_with(const Var<T>& x, const Tensor<T>& weights);

/// Sum of scalar Vars.
template <typename T>
Var<T> add_scalars(std::span<const Var<T>> terms);

}  // namespace pwc
