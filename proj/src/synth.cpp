#include "pwc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pwc {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) from a lattice coordinate.
double lattice(std::uint64_t seed, long ix, long iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL +
                                                       static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise with lattice spacing `cell` (in pixels), evaluated on the
// canvas pixel grid x = x0 + i, y = y0 + j and accumulated as weight * noise
// into out (h x w). Lattice values are tabulated once per call.
void add_value_noise(std::uint64_t seed, double cell, double weight, long y0, long x0, std::size_t h,
                     std::size_t w, double* out) {
  const long iy_lo = static_cast<long>(std::floor(y0 / cell));
  const long ix_lo = static_cast<long>(std::floor(x0 / cell));
  const long iy_hi = static_cast<long>(std::floor((y0 + long(h) - 1) / cell)) + 1;
  const long ix_hi = static_cast<long>(std::floor((x0 + long(w) - 1) / cell)) + 1;
  const std::size_t tw = static_cast<std::size_t>(ix_hi - ix_lo + 1);
  std::vector<double> table(static_cast<std::size_t>(iy_hi - iy_lo + 1) * tw);
  for (long iy = iy_lo; iy <= iy_hi; ++iy)
    for (long ix = ix_lo; ix <= ix_hi; ++ix) table[(iy - iy_lo) * tw + (ix - ix_lo)] = lattice(seed, ix, iy);
  for (std::size_t j = 0; j < h; ++j) {
    const double fy = double(y0 + long(j)) / cell;
    const long iy = static_cast<long>(std::floor(fy));
    const double ty = smoothstep(fy - iy);
    const double* r0 = &table[(iy - iy_lo) * tw];
    const double* r1 = r0 + tw;
    for (std::size_t i = 0; i < w; ++i) {
      const double fx = double(x0 + long(i)) / cell;
      const long ix = static_cast<long>(std::floor(fx));
      const double tx = smoothstep(fx - ix);
      const std::size_t k = static_cast<std::size_t>(ix - ix_lo);
      const double v = (1 - ty) * ((1 - tx) * r0[k] + tx * r0[k + 1]) + ty * ((1 - tx) * r1[k] + tx * r1[k + 1]);
      out[j * w + i] += weight * v;
    }
  }
}

// Texture raster over [-margin, H + margin) x [-margin, W + margin). Values are
// a function of absolute coordinates, so the margin never changes the frame.
struct Canvas {
  long margin = 0;
  std::size_t h = 0, w = 0;
  std::vector<float> rgb;  // 3 x h x w

  float at(int c, long y, long x) const { return rgb[(c * h + y) * w + x]; }
  float& at(int c, long y, long x) { return rgb[(c * h + y) * w + x]; }

  // Bilinear sample at frame coordinates, clamped to the canvas.
  float sample(int c, double fy, double fx) const {
    const double y = std::clamp(fy + margin, 0.0, double(h - 1));
    const double x = std::clamp(fx + margin, 0.0, double(w - 1));
    const long y0 = std::min<long>(static_cast<long>(y), long(h) - 2);
    const long x0 = std::min<long>(static_cast<long>(x), long(w) - 2);
    const double ay = y - y0, ax = x - x0;
    return static_cast<float>((1 - ay) * ((1 - ax) * at(c, y0, x0) + ax * at(c, y0, x0 + 1)) +
                              ay * ((1 - ax) * at(c, y0 + 1, x0) + ax * at(c, y0 + 1, x0 + 1)));
  }
};

Canvas render_texture(const SynthSpec& spec, std::uint64_t seed) {
  Canvas cv;
  cv.margin = static_cast<long>(std::ceil(3.0 * spec.max_displacement)) + 4;
  cv.h = spec.height + 2 * cv.margin;
  cv.w = spec.width + 2 * cv.margin;
  cv.rgb.assign(3 * cv.h * cv.w, 0.0f);
  const double cells[] = {16, 8, 4, 2};
  const double weights[] = {0.4, 0.3, 0.2, 0.1};
  std::vector<double> acc(cv.h * cv.w);
  for (int c = 0; c < 3; ++c) {
    if (spec.texture == TextureKind::smoothed_noise) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int o = 0; o < 4; ++o) {
        add_value_noise(seed + 17 * c + o, cells[o], weights[o], -cv.margin, -cv.margin, cv.h, cv.w, acc.data());
      }
    } else {
      std::fill(acc.begin(), acc.end(), 0.2);
      add_value_noise(seed + 17 * c, 32, 0.3, -cv.margin, -cv.margin, cv.h, cv.w, acc.data());
    }
    std::transform(acc.begin(), acc.end(), cv.rgb.begin() + c * cv.h * cv.w,
                   [](double v) { return static_cast<float>(v); });
  }
  if (spec.texture == TextureKind::random_dots) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xd075));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t dots = cv.h * cv.w / 40;
    for (std::size_t k = 0; k < dots; ++k) {
      const double cy = u(rng) * cv.h, cx = u(rng) * cv.w, r = 1.5 + 3.5 * u(rng);
      const float col[3] = {float(u(rng)), float(u(rng)), float(u(rng))};
      const long y0 = std::max<long>(0, long(cy - r - 1)), y1 = std::min<long>(cv.h - 1, long(cy + r + 1));
      const long x0 = std::max<long>(0, long(cx - r - 1)), x1 = std::min<long>(cv.w - 1, long(cx + r + 1));
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          const double cover = std::clamp(r + 0.5 - std::hypot(y - cy, x - cx), 0.0, 1.0);
          for (int c = 0; c < 3; ++c)
            cv.at(c, y, x) = static_cast<float>((1 - cover) * cv.at(c, y, x) + cover * col[c]);
        }
    }
  }
  return cv;
}

double max_corner_displacement(const Motion& m, const SynthSpec& s) {
  const double cy = (double(s.height) - 1) / 2, cx = (double(s.width) - 1) / 2;
  double best = 0;
  for (double y : {0.0, double(s.height) - 1})
    for (double x : {0.0, double(s.width) - 1}) {
      const auto d = m.displacement(x, y, cx, cy);
      best = std::max(best, std::hypot(d[0], d[1]));
    }
  return best;
}

Sample blank(std::size_t batch, std::size_t h, std::size_t w) {
  return {Tensor<float>({batch, 3, h, w}), Tensor<float>({batch, 3, h, w}),
          Tensor<float>({batch, 2, h, w}), Tensor<float>({batch, 1, h, w})};
}

}  // namespace

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::translate: return "translate";
    case MotionKind::rotate: return "rotate";
    case MotionKind::zoom: return "zoom";
    case MotionKind::affine_mix: return "affine_mix";
  }
  throw std::invalid_argument("unknown motion kind");
}

std::string to_string(TextureKind kind) {
  return kind == TextureKind::random_dots ? "random_dots" : "smoothed_noise";
}

MotionKind motion_kind_from_string(const std::string& name) {
  for (auto k : {MotionKind::translate, MotionKind::rotate, MotionKind::zoom, MotionKind::affine_mix})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown motion kind '" + name +
                              "' (expected translate, rotate, zoom or affine_mix)");
}

TextureKind texture_kind_from_string(const std::string& name) {
  if (name == "random_dots") return TextureKind::random_dots;
  if (name == "smoothed_noise") return TextureKind::smoothed_noise;
  throw std::invalid_argument("unknown texture '" + name +
                              "' (expected random_dots or smoothed_noise)");
}

void Sample::validate() const {
  for (const auto* t : {&image1, &image2, &flow, &mask}) require_rank4(*t, "sample");
  const std::size_t b = image1.batch(), h = image1.height(), w = image1.width();
  if (image1.channels() != 3 || image2.shape() != image1.shape() ||
      flow.shape() != Shape{b, 2, h, w} || mask.shape() != Shape{b, 1, h, w}) {
    throw DimensionError("sample fields disagree: image1 " + shape_to_string(image1.shape()) +
                         ", image2 " + shape_to_string(image2.shape()) + ", flow " +
                         shape_to_string(flow.shape()) + ", mask " + shape_to_string(mask.shape()));
  }
}

void SynthSpec::validate() const {
  if (height < 2 || width < 2) throw std::invalid_argument("synth: frame must be at least 2x2");
  if (!(max_displacement >= 0.0)) {
    throw std::invalid_argument("synth: max_displacement must be >= 0");
  }
  const double limit = double(std::min(height, width)) / 4.0;
  if (max_displacement > limit) {
    throw std::invalid_argument("synth: max_displacement " + std::to_string(max_displacement) +
                                " exceeds a quarter of the smaller side (" +
                                std::to_string(limit) + ")");
  }
  if (!(mask_drop_rate >= 0.0 && mask_drop_rate < 1.0)) {
    throw std::invalid_argument("synth: mask_drop_rate must lie in [0, 1)");
  }
}

Motion Motion::translation(double tx, double ty) {
  Motion m;
  m.t = {tx, ty};
  return m;
}

Motion Motion::rotation(double radians) {
  Motion m;
  const double c = std::cos(radians), s = std::sin(radians);
  m.a = {c, -s, s, c};
  return m;
}

Motion Motion::zoom(double scale) {
  Motion m;
  m.a = {scale, 0, 0, scale};
  return m;
}

std::array<double, 2> Motion::displacement(double x, double y, double cx, double cy) const {
  const double dx = x - cx, dy = y - cy;
  return {a[0] * dx + a[1] * dy - dx + t[0], a[2] * dx + a[3] * dy - dy + t[1]};
}

Motion draw_motion(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double md = spec.max_displacement;
  const double r_max = std::hypot((double(spec.width) - 1) / 2, (double(spec.height) - 1) / 2);
  switch (spec.motion) {
    case MotionKind::translate: {
      const double r = md * std::sqrt(u(rng)), phi = 2 * kPi * u(rng);
      return Motion::translation(r * std::cos(phi), r * std::sin(phi));
    }
    case MotionKind::rotate: {
      // A rotation by theta moves a point at radius r by 2 r sin(theta / 2).
      const double theta_max = 2 * std::asin(std::min(1.0, md / (2 * r_max)));
      return Motion::rotation((2 * u(rng) - 1) * theta_max);
    }
    case MotionKind::zoom:
      return Motion::zoom(1 + (2 * u(rng) - 1) * std::min(0.5, md / r_max));
    case MotionKind::affine_mix: {
      Motion m;
      std::array<double, 4> e;
      for (auto& v : e) v = 2 * u(rng) - 1;
      m.a = {1 + e[0], e[1], e[2], 1 + e[3]};
      m.t = {(2 * u(rng) - 1) * r_max, (2 * u(rng) - 1) * r_max};
      const double target = md * u(rng), now = max_corner_displacement(m, spec);
      const double k = now > 0 ? target / now : 0.0;
      for (int i = 0; i < 4; ++i) m.a[i] = (i == 0 || i == 3 ? 1.0 : 0.0) + k * e[i];
      m.t = {k * m.t[0], k * m.t[1]};
      return m;
    }
  }
  throw std::invalid_argument("unknown motion kind");
}

Sample gen_sample(const SynthSpec& spec) {
  spec.validate();
  return gen_sample(spec, draw_motion(spec, derive_seed(spec.seed, 1)));
}

Sample gen_sample(const SynthSpec& spec, const Motion& motion) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width;
  const Canvas tex = render_texture(spec, derive_seed(spec.seed, 0));
  const double cy = (double(H) - 1) / 2, cx = (double(W) - 1) / 2;
  const double det = motion.a[0] * motion.a[3] - motion.a[1] * motion.a[2];
  if (std::abs(det) < 1e-9) throw std::invalid_argument("synth: motion is not invertible");
  const std::array<double, 4> inv{motion.a[3] / det, -motion.a[1] / det, -motion.a[2] / det,
                                  motion.a[0] / det};

  Sample s = blank(1, H, W);
  std::mt19937_64 drop_rng(derive_seed(spec.seed, 2));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) s.image1.at(0, c, y, x) = tex.at(c, y + tex.margin, x + tex.margin);
      // I2(p) = I1(M^-1(p)), so pixel x of I1 reappears at M(x) = x + flow(x).
      const double py = double(y) - cy - motion.t[1], px = double(x) - cx - motion.t[0];
      const double sx = inv[0] * px + inv[1] * py + cx, sy = inv[2] * px + inv[3] * py + cy;
      for (int c = 0; c < 3; ++c) s.image2.at(0, c, y, x) = tex.sample(c, sy, sx);

      const auto d = motion.displacement(double(x), double(y), cx, cy);
      s.flow.at(0, 0, y, x) = static_cast<float>(d[0]);
      s.flow.at(0, 1, y, x) = static_cast<float>(d[1]);
      const double tx = x + d[0], ty = y + d[1];
      const bool inside = tx >= 0 && tx <= double(W) - 1 && ty >= 0 && ty <= double(H) - 1;
      bool valid = !spec.occlusion || inside;
      if (spec.mask_drop_rate > 0.0 && u(drop_rng) < spec.mask_drop_rate) valid = false;
      s.mask.at(0, 0, y, x) = valid ? 1.0f : 0.0f;
    }
  return s;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ (index * 0xa0761d6478bd642fULL + 0xe7037ed1a0b428dbULL));
}

std::vector<Sample> gen_dataset(const SynthSpec& base, const std::vector<MotionKind>& kinds,
                                std::size_t count) {
  if (kinds.empty()) throw std::invalid_argument("gen_dataset: no motion kinds given");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s = base;
    s.motion = kinds[i % kinds.size()];
    s.seed = derive_seed(base.seed, 1000 + i);
    out.push_back(gen_sample(s));
  }
  return out;
}

Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width) {
  s.validate();
  if (height == 0 || width == 0 || top + height > s.height() || left + width > s.width()) {
    throw DimensionError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                         std::to_string(top) + ", " + std::to_string(left) +
                         ") does not fit a " + std::to_string(s.height()) + "x" +
                         std::to_string(s.width()) + " sample");
  }
  auto cut = [&](const Tensor<float>& t) {
    Tensor<float> out({t.batch(), t.channels(), height, width});
    for (std::size_t b = 0; b < t.batch(); ++b)
      for (std::size_t c = 0; c < t.channels(); ++c)
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x) out.at(b, c, y, x) = t.at(b, c, top + y, left + x);
    return out;
  };
  return {cut(s.image1), cut(s.image2), cut(s.flow), cut(s.mask)};
}

Sample hflip(const Sample& s) {
  s.validate();
  auto mirror = [](const Tensor<float>& t, bool negate_first) {
    Tensor<float> out(t.shape());
    const std::size_t W = t.width();
    for (std::size_t b = 0; b < t.batch(); ++b)
      for (std::size_t c = 0; c < t.channels(); ++c)
        for (std::size_t y = 0; y < t.height(); ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const float v = t.at(b, c, y, W - 1 - x);
            out.at(b, c, y, x) = (negate_first && c == 0) ? -v : v;
          }
    return out;
  };
  return {mirror(s.image1, false), mirror(s.image2, false), mirror(s.flow, true),
          mirror(s.mask, false)};
}

Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed) {
  s.validate();
  const std::size_t ch = cfg.crop_height ? cfg.crop_height : s.height();
  const std::size_t cw = cfg.crop_width ? cfg.crop_width : s.width();
  if (ch > s.height() || cw > s.width()) {
    throw DimensionError("augment: crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                         " exceeds sample " + std::to_string(s.height()) + "x" +
                         std::to_string(s.width()));
  }
  std::mt19937_64 rng(seed);
  const std::size_t top = std::uniform_int_distribution<std::size_t>(0, s.height() - ch)(rng);
  const std::size_t left = std::uniform_int_distribution<std::size_t>(0, s.width() - cw)(rng);
  Sample out = crop(s, top, left, ch, cw);
  if (cfg.hflip && (rng() & 1)) out = hflip(out);
  return out;
}

Sample stack(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack: no samples");
  const std::size_t H = samples.front().height(), W = samples.front().width();
  Sample out = blank(samples.size(), H, W);
  auto copy = [](const Tensor<float>& src, Tensor<float>& dst, std::size_t b) {
    const std::size_t n = src.size();
    std::copy(src.raw(), src.raw() + n, dst.raw() + b * n);
  };
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const Sample& s = samples[b];
    s.validate();
    if (s.image1.batch() != 1 || s.height() != H || s.width() != W) {
      throw DimensionError("stack: sample " + std::to_string(b) + " is " +
                           shape_to_string(s.image1.shape()) + ", expected 1x3x" +
                           std::to_string(H) + "x" + std::to_string(W));
    }
    copy(s.image1, out.image1, b);
    copy(s.image2, out.image2, b);
    copy(s.flow, out.flow, b);
    copy(s.mask, out.mask, b);
  }
  return out;
}

}  // namespace pwc
