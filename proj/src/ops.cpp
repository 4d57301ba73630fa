#include "pwc/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace pwc {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel;
  std::size_t out_h, out_w;
  Conv2dOptions opt;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// Valid output range [lo, hi) along one axis for a given kernel tap offset.
void valid_range(std::size_t out, std::size_t in, int stride, long offset,
                 std::size_t& lo, std::size_t& hi) {
  // in_index = o * stride + offset must lie in [0, in).
  long l = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long h = (static_cast<long>(in) - 1 - offset);
  h = h < 0 ? 0 : h / stride + 1;
  l = std::min<long>(l, static_cast<long>(out));
  h = std::clamp<long>(h, l, static_cast<long>(out));
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// Per-thread im2col buffer. Every use overwrites the region it reads, so
// growing it is the only time it is initialised.
template <typename T>
T* col_scratch(std::size_t n) {
  thread_local AlignedVector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const std::size_t P = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const long oy_off = static_cast<long>(ky) * d - g.opt.pad_top;
      std::size_t y_lo, y_hi;
      valid_range(g.out_h, g.height, s, oy_off, y_lo, y_hi);
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const long ox_off = static_cast<long>(kx) * d - g.opt.pad_left;
        std::size_t x_lo, x_hi;
        valid_range(g.out_w, g.width, s, ox_off, x_lo, x_hi);
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * P;
        std::fill(row, row + P, T{0});
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const T* src = plane + (oy * s + oy_off) * g.width;
          T* dst = row + oy * g.out_w;
          if (s == 1) {
            std::copy(src + x_lo + ox_off, src + x_hi + ox_off, dst + x_lo);
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) dst[ox] = src[ox * s + ox_off];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const std::size_t P = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const long oy_off = static_cast<long>(ky) * d - g.opt.pad_top;
      std::size_t y_lo, y_hi;
      valid_range(g.out_h, g.height, s, oy_off, y_lo, y_hi);
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const long ox_off = static_cast<long>(kx) * d - g.opt.pad_left;
        std::size_t x_lo, x_hi;
        valid_range(g.out_w, g.width, s, ox_off, x_lo, x_hi);
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * P;
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          T* dst = plane + (oy * s + oy_off) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = x_lo; ox < x_hi; ++ox) dst[ox * s + ox_off] += src[ox];
        }
      }
    }
  }
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

// Bilinear tap table for one axis of the x2 upsampler.
struct Taps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

Taps upsample_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    t.i0[o] = i0;
    t.i1[o] = std::min(i0 + 1, in - 1);
    t.w1[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int pad_lo, int pad_hi,
                               int stride, int dilation) {
  const long span = static_cast<long>(in) + pad_lo + pad_hi -
                    static_cast<long>(dilation) * (static_cast<long>(kernel) - 1) - 1;
  if (span < 0) {
    throw DimensionError("conv2d: input extent " + std::to_string(in) +
                         " too small for kernel " + std::to_string(kernel) + " with dilation " +
                         std::to_string(dilation));
  }
  return static_cast<std::size_t>(span / stride) + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              const Conv2dOptions& opt) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank4(x, "conv2d input");
  require_rank4(w, "conv2d weight");
  if (opt.stride < 1 || opt.dilation < 1) {
    throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
  }
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: kernel must be square");
  if (w.dim(1) != x.channels()) {
    throw DimensionError("conv2d: input has " + std::to_string(x.channels()) +
                         " channels but weight expects " + std::to_string(w.dim(1)) +
                         " (weight " + shape_to_string(w.shape()) + ")");
  }
  if (bias.value().size() != w.dim(0)) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.value().size()) +
                         " does not match " + std::to_string(w.dim(0)) + " output channels");
  }

  ConvGeometry g{x.channels(), x.height(), x.width(), w.dim(2), 0, 0, opt};
  g.out_h = conv_output_extent(g.height, g.kernel, opt.pad_top, opt.pad_bottom, opt.stride,
                               opt.dilation);
  g.out_w = conv_output_extent(g.width, g.kernel, opt.pad_left, opt.pad_right, opt.stride,
                               opt.dilation);
  const std::size_t B = x.batch(), O = w.dim(0), K = g.rows(), P = g.cols();

  Tensor<T> out({B, O, g.out_h, g.out_w});
  T* col = col_scratch<T>(K * P);
  ConstMatMap<T> W(w.raw(), O, K);
  const T* bptr = bias.value().raw();
  for (std::size_t b = 0; b < B; ++b) {
    im2col(x.raw() + b * g.channels * g.height * g.width, g, col);
    MatMap<T> Y(out.raw() + b * O * P, O, P);
    Y.noalias() = W * ConstMatMap<T>(col, K, P);
    for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += bptr[o];
  }

  return make_result<T>(
      std::move(out), {input, weight, bias},
      [g](Node<T>& node) {
        Var<T>& in = node.inputs[0];
        Var<T>& wt = node.inputs[1];
        Var<T>& bs = node.inputs[2];
        const Tensor<T>& x = in.value();
        const std::size_t B = x.batch(), O = wt.value().dim(0), K = g.rows(), P = g.cols();
        const std::size_t in_stride = g.channels * g.height * g.width;
        const Tensor<T>& dy = node.grad;
        T* col = col_scratch<T>(K * P);
        ConstMatMap<T> W(wt.value().raw(), O, K);
        for (std::size_t b = 0; b < B; ++b) {
          ConstMatMap<T> dY(dy.raw() + b * O * P, O, P);
          if (wt.requires_grad()) {
            im2col(x.raw() + b * in_stride, g, col);
            MatMap<T> dW(wt.grad_buffer().raw(), O, K);
            dW.noalias() += dY * ConstMatMap<T>(col, K, P).transpose();
          }
          if (bs.requires_grad()) {
            T* db = bs.grad_buffer().raw();
            for (std::size_t o = 0; o < O; ++o) db[o] += dY.row(o).sum();
          }
          if (in.requires_grad()) {
            MatMap<T> dcol(col, K, P);
            dcol.noalias() = W.transpose() * dY;
            col2im_add(col, g, in.grad_buffer().raw() + b * in_stride);
          }
        }
      },
      "conv2d");
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  if (!(slope > T{0} && slope < T{1})) {
    throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  }
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v >= T{0} ? v : slope * v;
  return make_result<T>(
      std::move(out), {x},
      [slope](Node<T>& node) {
        Var<T>& in = node.inputs[0];
        const auto xv = in.value().data();
        auto gx = in.grad_buffer().data();
        const auto gy = node.grad.data();
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += xv[i] >= T{0} ? gy[i] : slope * gy[i];
      },
      "leaky_relu");
}

template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x) {
  require_rank4(x.value(), "upsample2x_bilinear");
  return upsample2x_bilinear(x, 2 * x.value().height(), 2 * x.value().width());
}

template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& in = x.value();
  require_rank4(in, "upsample2x_bilinear");
  const std::size_t H = in.height(), W = in.width();
  if (out_h < 2 * H || out_h > 2 * H + 1 || out_w < 2 * W || out_w > 2 * W + 1) {
    throw DimensionError("upsample2x_bilinear: target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " is not a x2 extent of " +
                         shape_to_string(in.shape()));
  }
  const Taps ty = upsample_taps(H, out_h);
  const Taps tx = upsample_taps(W, out_w);
  const std::size_t planes = in.batch() * in.channels();
  Tensor<T> out({in.batch(), in.channels(), out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in.raw() + p * H * W;
    T* dst = out.raw() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T wy1 = static_cast<T>(ty.w1[oy]), wy0 = T{1} - wy1;
      const T* r0 = src + ty.i0[oy] * W;
      const T* r1 = src + ty.i1[oy] * W;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T wx1 = static_cast<T>(tx.w1[ox]), wx0 = T{1} - wx1;
        dst[oy * out_w + ox] = wy0 * (wx0 * r0[tx.i0[ox]] + wx1 * r0[tx.i1[ox]]) +
                               wy1 * (wx0 * r1[tx.i0[ox]] + wx1 * r1[tx.i1[ox]]);
      }
    }
  }
  return make_result<T>(
      std::move(out), {x},
      [ty, tx, H, W, out_h, out_w, planes](Node<T>& node) {
        T* gin = node.inputs[0].grad_buffer().raw();
        const T* gout = node.grad.raw();
        for (std::size_t p = 0; p < planes; ++p) {
          T* gsrc = gin + p * H * W;
          const T* gdst = gout + p * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const T wy1 = static_cast<T>(ty.w1[oy]), wy0 = T{1} - wy1;
            T* r0 = gsrc + ty.i0[oy] * W;
            T* r1 = gsrc + ty.i1[oy] * W;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const T wx1 = static_cast<T>(tx.w1[ox]), wx0 = T{1} - wx1;
              const T g = gdst[oy * out_w + ox];
              r0[tx.i0[ox]] += wy0 * wx0 * g;
              r0[tx.i1[ox]] += wy0 * wx1 * g;
              r1[tx.i0[ox]] += wy1 * wx0 * g;
              r1[tx.i1[ox]] += wy1 * wx1 * g;
            }
          }
        }
      },
      "upsample2x_bilinear");
}

template <typename T>
Var<T> avg_pool2x(const Var<T>& x) {
  const Tensor<T>& in = x.value();
  require_rank4(in, "avg_pool2x");
  const std::size_t H = in.height(), W = in.width();
  if (H < 2 || W < 2) throw DimensionError("avg_pool2x: input " + shape_to_string(in.shape()) +
                                           " smaller than 2x2");
  const std::size_t oh = H / 2, ow = W / 2, planes = in.batch() * in.channels();
  Tensor<T> out({in.batch(), in.channels(), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = in.raw() + p * H * W;
    T* d = out.raw() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        d[y * ow + xx] = T(0.25) * (s[2 * y * W + 2 * xx] + s[2 * y * W + 2 * xx + 1] +
                                    s[(2 * y + 1) * W + 2 * xx] + s[(2 * y + 1) * W + 2 * xx + 1]);
  }
  return make_result<T>(
      std::move(out), {x},
      [H, W, oh, ow, planes](Node<T>& node) {
        T* gin = node.inputs[0].grad_buffer().raw();
        const T* gout = node.grad.raw();
        for (std::size_t p = 0; p < planes; ++p) {
          T* s = gin + p * H * W;
          const T* d = gout + p * oh * ow;
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
              const T g = T(0.25) * d[y * ow + xx];
              s[2 * y * W + 2 * xx] += g;
              s[2 * y * W + 2 * xx + 1] += g;
              s[(2 * y + 1) * W + 2 * xx] += g;
              s[(2 * y + 1) * W + 2 * xx + 1] += g;
            }
        }
      },
      "avg_pool2x");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return make_result<T>(
      std::move(out), {a, b},
      [](Node<T>& node) {
        const auto g = node.grad.data();
        for (auto& in : node.inputs) {
          if (!in.requires_grad()) continue;
          auto gi = in.grad_buffer().data();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      },
      "add");
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_result<T>(
      std::move(out), {x},
      [factor](Node<T>& node) {
        auto gi = node.inputs[0].grad_buffer().data();
        const auto g = node.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += factor * g[i];
      },
      "scale");
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Tensor<T>& first = parts[0].value();
  require_rank4(first, "concat_channels");
  const std::size_t B = first.batch(), H = first.height(), W = first.width();
  std::size_t C = 0;
  for (const auto& p : parts) {
    const Tensor<T>& t = p.value();
    require_rank4(t, "concat_channels");
    if (t.batch() != B || t.height() != H || t.width() != W) {
      throw DimensionError("concat_channels: " + shape_to_string(t.shape()) +
                           " incompatible with " + shape_to_string(first.shape()));
    }
    C += t.channels();
  }
  Tensor<T> out({B, C, H, W});
  const std::size_t plane = H * W;
  for (std::size_t b = 0; b < B; ++b) {
    T* dst = out.raw() + b * C * plane;
    for (const auto& p : parts) {
      const Tensor<T>& t = p.value();
      const std::size_t n = t.channels() * plane;
      std::copy_n(t.raw() + b * n, n, dst);
      dst += n;
    }
  }
  return make_result<T>(
      std::move(out), std::vector<Var<T>>(parts.begin(), parts.end()),
      [B, C, plane](Node<T>& node) {
        std::size_t offset = 0;
        for (auto& in : node.inputs) {
          const std::size_t n = in.value().channels() * plane;
          if (in.requires_grad()) {
            T* gi = in.grad_buffer().raw();
            for (std::size_t b = 0; b < B; ++b) {
              const T* g = node.grad.raw() + b * C * plane + offset;
              for (std::size_t i = 0; i < n; ++i) gi[b * n + i] += g[i];
            }
          }
          offset += n;
        }
      },
      "concat_channels");
}

template <typename T>
Var<T> pad_spatial(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& in = x.value();
  require_rank4(in, "pad_spatial");
  const std::size_t H = in.height(), W = in.width();
  if (out_h < H || out_w < W) throw DimensionError("pad_spatial: target smaller than input");
  if (out_h == H && out_w == W) return x;
  const std::size_t planes = in.batch() * in.channels();
  Tensor<T> out({in.batch(), in.channels(), out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < H; ++y)
      std::copy_n(in.raw() + (p * H + y) * W, W, out.raw() + (p * out_h + y) * out_w);
  return make_result<T>(
      std::move(out), {x},
      [H, W, out_h, out_w, planes](Node<T>& node) {
        T* gi = node.inputs[0].grad_buffer().raw();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t y = 0; y < H; ++y)
            for (std::size_t xx = 0; xx < W; ++xx)
              gi[(p * H + y) * W + xx] += node.grad[(p * out_h + y) * out_w + xx];
      },
      "pad_spatial");
}

template <typename T>
Var<T> crop_spatial(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& in = x.value();
  require_rank4(in, "crop_spatial");
  const std::size_t H = in.height(), W = in.width();
  if (out_h > H || out_w > W) throw DimensionError("crop_spatial: target larger than input");
  if (out_h == H && out_w == W) return x;
  const std::size_t planes = in.batch() * in.channels();
  Tensor<T> out({in.batch(), in.channels(), out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < out_h; ++y)
      std::copy_n(in.raw() + (p * H + y) * W, out_w, out.raw() + (p * out_h + y) * out_w);
  return make_result<T>(
      std::move(out), {x},
      [H, W, out_h, out_w, planes](Node<T>& node) {
        T* gi = node.inputs[0].grad_buffer().raw();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t xx = 0; xx < out_w; ++xx)
              gi[(p * H + y) * W + xx] += node.grad[(p * out_h + y) * out_w + xx];
      },
      "crop_spatial");
}

// Sum of f(i) over [0, n) with 16 interleaved partial sums, combined in a
// fixed order. Breaks the serial add chain so the loop vectorises.
template <typename T, typename F>
T lane_sum(std::size_t n, F f) {
  constexpr std::size_t L = 16;
  T part[L] = {};
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    for (std::size_t k = 0; k < L; ++k) part[k] += f(i + k);
  }
  for (std::size_t k = 0; i < n; ++i, ++k) part[k] += f(i);
  T acc{0};
  for (T p : part) acc += p;
  return acc;
}

template <typename T>
Var<T> sum_squares(const Var<T>& x) {
  const T* xv = x.value().raw();
  const T acc = lane_sum<T>(x.value().size(), [xv](std::size_t i) { return xv[i] * xv[i]; });
  return make_result<T>(
      Tensor<T>::scalar(acc), {x},
      [](Node<T>& node) {
        Var<T>& in = node.inputs[0];
        const T g = node.grad[0];
        auto gi = in.grad_buffer().data();
        const auto xv = in.value().data();
        for (std::size_t i = 0; i < xv.size(); ++i) gi[i] += T{2} * xv[i] * g;
      },
      "sum_squares");
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const T* xv = x.value().raw();
  const T acc = lane_sum<T>(x.value().size(), [xv](std::size_t i) { return xv[i]; });
  return make_result<T>(
      Tensor<T>::scalar(acc), {x},
      [](Node<T>& node) {
        const T g = node.grad[0];
        for (auto& v : node.inputs[0].grad_buffer().data()) v += g;
      },
      "sum");
}

template <typename T>
Var<T> dot_with(const Var<T>& x, const Tensor<T>& weights) {
  if (weights.shape() != x.shape()) {
    throw DimensionError("dot_with: weight shape " + shape_to_string(weights.shape()) +
                         " vs " + shape_to_string(x.shape()));
  }
  T acc{0};
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  return make_result<T>(
      Tensor<T>::scalar(acc), {x},
      [weights](Node<T>& node) {
        const T g = node.grad[0];
        auto gi = node.inputs[0].grad_buffer().data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += weights[i] * g;
      },
      "dot_with");
}

template <typename T>
Var<T> add_scalars(std::span<const Var<T>> terms) {
  T acc{0};
  for (const auto& t : terms) {
    if (t.value().size() != 1) throw DimensionError("add_scalars: non-scalar term");
    acc += t.value()[0];
  }
  return make_result<T>(
      Tensor<T>::scalar(acc), std::vector<Var<T>>(terms.begin(), terms.end()),
      [](Node<T>& node) {
        const T g = node.grad[0];
        for (auto& in : node.inputs)
          if (in.requires_grad()) in.grad_buffer()[0] += g;
      },
      "add_scalars");
}

#define PWC_INSTANTIATE_OPS(T)                                                            \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&); \
  template Var<T> leaky_relu(const Var<T>&, T);                                           \
  template Var<T> upsample2x_bilinear(const Var<T>&);                                     \
  template Var<T> upsample2x_bilinear(const Var<T>&, std::size_t, std::size_t);           \
  template Var<T> avg_pool2x(const Var<T>&);                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale(const Var<T>&, T);                                                \
  template Var<T> concat_channels(std::span<const Var<T>>);                               \
  template Var<T> pad_spatial(const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> crop_spatial(const Var<T>&, std::size_t, std::size_t);                  \
  template Var<T> sum_squares(const Var<T>&);                                             \
  template Var<T> sum(const Var<T>&);                                                     \
  template Var<T> dot_with(const Var<T>&, const Tensor<T>&);                              \
  template Var<T> add_scalars(std::span<const Var<T>>);

PWC_INSTANTIATE_OPS(float)
PWC_INSTANTIATE_OPS(double)

}  // namespace pwc
