#include "pwc/flow_ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pwc/ops.hpp"

namespace pwc {

template <typename T>
Var<T> warp(const Var<T>& features, const Var<T>& flow) {
  const Tensor<T>& f = features.value();
  const Tensor<T>& w = flow.value();
  require_rank4(f, "warp features");
  require_rank4(w, "warp flow");
  if (w.channels() != 2) throw DimensionError("warp: flow must have 2 channels, got " +
                                              shape_to_string(w.shape()));
  if (w.batch() != f.batch() || w.height() != f.height() || w.width() != f.width()) {
    throw DimensionError("warp: flow " + shape_to_string(w.shape()) +
                         " does not match features " + shape_to_string(f.shape()));
  }
  const std::size_t B = f.batch(), C = f.channels(), H = f.height(), W = f.width();
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  Tensor<T> out(f.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const T sx = static_cast<T>(x) + w.at(b, 0, y, x);
        const T sy = static_cast<T>(y) + w.at(b, 1, y, x);
        const T fx = std::floor(sx), fy = std::floor(sy);
        const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
        const T ax = sx - fx, ay = sy - fy;
        const bool vx0 = x0 >= 0 && x0 < Wl, vx1 = x0 + 1 >= 0 && x0 + 1 < Wl;
        const bool vy0 = y0 >= 0 && y0 < Hl, vy1 = y0 + 1 >= 0 && y0 + 1 < Hl;
        const T w00 = (T{1} - ay) * (T{1} - ax), w01 = (T{1} - ay) * ax;
        const T w10 = ay * (T{1} - ax), w11 = ay * ax;
        for (std::size_t c = 0; c < C; ++c) {
          const T* plane = f.raw() + (b * C + c) * H * W;
          T v{0};
          if (vy0 && vx0) v += w00 * plane[y0 * Wl + x0];
          if (vy0 && vx1) v += w01 * plane[y0 * Wl + x0 + 1];
          if (vy1 && vx0) v += w10 * plane[(y0 + 1) * Wl + x0];
          if (vy1 && vx1) v += w11 * plane[(y0 + 1) * Wl + x0 + 1];
          out.at(b, c, y, x) = v;
        }
      }
    }
  }
  return make_result<T>(
      std::move(out), {features, flow},
      [B, C, H, W](Node<T>& node) {
        Var<T>& feat = node.inputs[0];
        Var<T>& fl = node.inputs[1];
        const Tensor<T>& f = feat.value();
        const Tensor<T>& w = fl.value();
        const Tensor<T>& g = node.grad;
        Tensor<T>* gf = feat.requires_grad() ? &feat.grad_buffer() : nullptr;
        Tensor<T>* gw = fl.requires_grad() ? &fl.grad_buffer() : nullptr;
        const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
              const T sx = static_cast<T>(x) + w.at(b, 0, y, x);
              const T sy = static_cast<T>(y) + w.at(b, 1, y, x);
              const T fx = std::floor(sx), fy = std::floor(sy);
              const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
              const T ax = sx - fx, ay = sy - fy;
              const bool vx0 = x0 >= 0 && x0 < Wl, vx1 = x0 + 1 >= 0 && x0 + 1 < Wl;
              const bool vy0 = y0 >= 0 && y0 < Hl, vy1 = y0 + 1 >= 0 && y0 + 1 < Hl;
              const T w00 = (T{1} - ay) * (T{1} - ax), w01 = (T{1} - ay) * ax;
              const T w10 = ay * (T{1} - ax), w11 = ay * ax;
              T du{0}, dv{0};
              for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (b * C + c) * H * W;
                const T* plane = f.raw() + base;
                const T go = g.at(b, c, y, x);
                const T f00 = (vy0 && vx0) ? plane[y0 * Wl + x0] : T{0};
                const T f01 = (vy0 && vx1) ? plane[y0 * Wl + x0 + 1] : T{0};
                const T f10 = (vy1 && vx0) ? plane[(y0 + 1) * Wl + x0] : T{0};
                const T f11 = (vy1 && vx1) ? plane[(y0 + 1) * Wl + x0 + 1] : T{0};
                if (gf) {
                  T* gp = gf->raw() + base;
                  if (vy0 && vx0) gp[y0 * Wl + x0] += w00 * go;
                  if (vy0 && vx1) gp[y0 * Wl + x0 + 1] += w01 * go;
                  if (vy1 && vx0) gp[(y0 + 1) * Wl + x0] += w10 * go;
                  if (vy1 && vx1) gp[(y0 + 1) * Wl + x0 + 1] += w11 * go;
                }
                du += go * ((T{1} - ay) * (f01 - f00) + ay * (f11 - f10));
                dv += go * ((T{1} - ax) * (f10 - f00) + ax * (f11 - f01));
              }
              if (gw) {
                gw->at(b, 0, y, x) += du;
                gw->at(b, 1, y, x) += dv;
              }
            }
          }
        }
      },
      "warp");
}

template <typename T>
Var<T> warp(const Var<T>& features, const FlowField<T>& flow) {
  if (flow.scale != FlowScale::pixel_units) {
    throw std::invalid_argument("warp: flow must be in pixel units of the feature grid");
  }
  return warp(features, flow.tensor);
}

template <typename T>
CostVolume<T> correlation_cost_volume(const Var<T>& c1, const Var<T>& cw, int search_range) {
  const Tensor<T>& a = c1.value();
  const Tensor<T>& b = cw.value();
  require_rank4(a, "correlation c1");
  if (a.shape() != b.shape()) {
    throw DimensionError("correlation: feature shapes differ " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  if (search_range < 0) throw std::invalid_argument("correlation: search range must be >= 0");
  const int d = search_range, D = 2 * d + 1;
  const std::size_t B = a.batch(), N = a.channels(), H = a.height(), W = a.width();
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  const T inv_n = T{1} / static_cast<T>(N);
  Tensor<T> out({B, static_cast<std::size_t>(D * D), H, W});

  // Visits every in-bounds (x1, x1 + o) pair for a given batch and offset.
  auto for_offset = [Hl, Wl](int dy, int dx, auto&& body) {
    const long y_lo = std::max(0L, -static_cast<long>(dy));
    const long y_hi = std::min(Hl, Hl - dy);
    const long x_lo = std::max(0L, -static_cast<long>(dx));
    const long x_hi = std::min(Wl, Wl - dx);
    for (long y = y_lo; y < y_hi; ++y) body(y, x_lo, x_hi);
  };

  for (std::size_t bi = 0; bi < B; ++bi) {
    for (int dy = -d; dy <= d; ++dy) {
      for (int dx = -d; dx <= d; ++dx) {
        T* o = out.raw() + (bi * D * D + cost_volume_channel(dy, dx, d)) * H * W;
        for (std::size_t c = 0; c < N; ++c) {
          const T* pa = a.raw() + (bi * N + c) * H * W;
          const T* pb = b.raw() + (bi * N + c) * H * W;
          for_offset(dy, dx, [&](long y, long x_lo, long x_hi) {
            const T* ra = pa + y * Wl;
            const T* rb = pb + (y + dy) * Wl + dx;
            T* ro = o + y * Wl;
            for (long x = x_lo; x < x_hi; ++x) ro[x] += ra[x] * rb[x];
          });
        }
        for (std::size_t i = 0; i < H * W; ++i) o[i] *= inv_n;
      }
    }
  }

  Var<T> volume = make_result<T>(
      std::move(out), {c1, cw},
      [d, D, B, N, H, W, inv_n, for_offset](Node<T>& node) {
        Var<T>& va = node.inputs[0];
        Var<T>& vb = node.inputs[1];
        const T* a = va.value().raw();
        const T* b = vb.value().raw();
        T* ga = va.requires_grad() ? va.grad_buffer().raw() : nullptr;
        T* gb = vb.requires_grad() ? vb.grad_buffer().raw() : nullptr;
        const long Wl = static_cast<long>(W);
        for (std::size_t bi = 0; bi < B; ++bi) {
          for (int dy = -d; dy <= d; ++dy) {
            for (int dx = -d; dx <= d; ++dx) {
              const T* g = node.grad.raw() + (bi * D * D + cost_volume_channel(dy, dx, d)) * H * W;
              for (std::size_t c = 0; c < N; ++c) {
                const std::size_t off = (bi * N + c) * H * W;
                for_offset(dy, dx, [&](long y, long x_lo, long x_hi) {
                  const T* gr = g + y * Wl;
                  const long ia = y * Wl;
                  const long ib = (y + dy) * Wl + dx;
                  for (long x = x_lo; x < x_hi; ++x) {
                    const T gs = gr[x] * inv_n;
                    if (ga) ga[off + ia + x] += gs * b[off + ib + x];
                    if (gb) gb[off + ib + x] += gs * a[off + ia + x];
                  }
                });
              }
            }
          }
        }
      },
      "correlation_cost_volume");
  return {volume, search_range};
}

template <typename T>
FlowField<T> upsample_and_rescale_flow(const FlowField<T>& coarse, std::optional<std::size_t> out_h,
                                       std::optional<std::size_t> out_w) {
  if (coarse.scale != FlowScale::pixel_units) {
    throw std::invalid_argument(
        "upsample_and_rescale_flow: internal-scale flow is resolution independent; convert to "
        "pixel units with scale_flow first");
  }
  const Tensor<T>& v = coarse.tensor.value();
  require_rank4(v, "upsample_and_rescale_flow");
  if (v.channels() != 2) throw DimensionError("upsample_and_rescale_flow: flow must have 2 channels");
  const std::size_t h = out_h.value_or(2 * v.height());
  const std::size_t w = out_w.value_or(2 * v.width());
  return {scale(upsample2x_bilinear(coarse.tensor, h, w), T{2}), FlowScale::pixel_units,
          coarse.level - 1};
}

template <typename T>
FlowField<T> scale_flow(const FlowField<T>& flow, T factor) {
  if (!std::isfinite(static_cast<double>(factor))) {
    throw std::invalid_argument("scale_flow: factor must be finite");
  }
  FlowField<T> out{scale(flow.tensor, factor), flow.scale, flow.level};
  if (flow.scale == FlowScale::internal_scale &&
      std::abs(static_cast<double>(factor) - internal_to_pixels(flow.level)) <
          1e-12 * internal_to_pixels(flow.level)) {
    out.scale = FlowScale::pixel_units;
  }
  return out;
}

#define PWC_INSTANTIATE_FLOW(T)                                                            \
  template Var<T> warp(const Var<T>&, const Var<T>&);                                      \
  template Var<T> warp(const Var<T>&, const FlowField<T>&);                                \
  template CostVolume<T> correlation_cost_volume(const Var<T>&, const Var<T>&, int);       \
  template FlowField<T> upsample_and_rescale_flow(const FlowField<T>&,                     \
                                                  std::optional<std::size_t>,              \
                                                  std::optional<std::size_t>);             \
  template FlowField<T> scale_flow(const FlowField<T>&, T);

PWC_INSTANTIATE_FLOW(float)
PWC_INSTANTIATE_FLOW(double)

}  // namespace pwc
