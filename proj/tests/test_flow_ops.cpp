#include <cmath>
#include <random>

#include "doctest.h"
#include "pwc/flow_ops.hpp"
#include "pwc/grad_check.hpp"
#include "pwc/ops.hpp"
#include "test_util.hpp"

using namespace pwc;
using pwc::testing::max_abs_diff;
using pwc::testing::random_tensor;

namespace {

template <typename T>
Tensor<T> constant_flow(std::size_t b, std::size_t h, std::size_t w, T u, T v) {
  Tensor<T> f({b, 2, h, w});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        f.at(i, 0, y, x) = u;
        f.at(i, 1, y, x) = v;
      }
  return f;
}

// out(x) = in(x + (u, v)) with zero fill, by direct index arithmetic.
Tensor<float> shifted(const Tensor<float>& in, int u, int v) {
  Tensor<float> out(in.shape());
  const int H = int(in.height()), W = int(in.width());
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sy = y + v, sx = x + u;
        if (sy >= 0 && sy < H && sx >= 0 && sx < W) out.at(0, c, y, x) = in.at(0, c, sy, sx);
      }
  return out;
}

}  // namespace

TEST_CASE("warp with zero flow is the identity") {
  auto f = random_tensor<float>({2, 3, 5, 7}, 1);
  auto out = warp(make_constant(f), make_constant(Tensor<float>({2, 2, 5, 7})));
  CHECK(out.value() == f);
}

TEST_CASE("warp with flow (1, 0) shifts one column") {
  auto f = random_tensor<float>({1, 2, 4, 5}, 2);
  auto out = warp(make_constant(f), make_constant(constant_flow<float>(1, 4, 5, 1.0f, 0.0f))).value();
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x + 1 < 5; ++x) CHECK(out.at(0, c, y, x) == f.at(0, c, y, x + 1));
      CHECK(out.at(0, c, y, 4) == 0.0f);
    }
}

TEST_CASE("warp samples the bilinear midpoint") {
  Tensor<float> f({1, 1, 1, 2}, std::vector<float>{0.0f, 2.0f});
  auto flow = constant_flow<float>(1, 1, 2, 0.5f, 0.0f);
  auto out = warp(make_constant(f), make_constant(flow)).value();
  CHECK(out[0] == 1.0f);
}

TEST_CASE("warp with constant integer flow equals an index shift on all small maps") {
  std::uint64_t seed = 100;
  for (std::size_t h = 1; h <= 6; ++h)
    for (std::size_t w = 1; w <= 6; ++w)
      for (std::size_t c = 1; c <= 3; ++c) {
        auto f = random_tensor<float>({1, c, h, w}, seed++);
        for (int v = -3; v <= 3; ++v)
          for (int u = -3; u <= 3; ++u) {
            auto out = warp(make_constant(f),
                            make_constant(constant_flow<float>(1, h, w, float(u), float(v))));
            REQUIRE(out.value() == shifted(f, u, v));
          }
      }
}

TEST_CASE("warp requires pixel-unit flow fields and matching shapes") {
  auto f = make_constant(Tensor<float>({1, 2, 4, 4}));
  FlowField<float> internal{make_constant(Tensor<float>({1, 2, 4, 4})), FlowScale::internal_scale, 2};
  CHECK_THROWS(warp(f, internal));
  CHECK_THROWS_AS(warp(f, make_constant(Tensor<float>({1, 2, 4, 3}))), DimensionError);
  CHECK_THROWS_AS(warp(f, make_constant(Tensor<float>({1, 3, 4, 4}))), DimensionError);
}

TEST_CASE("warp gradients at fractional flow") {
  auto feat = random_tensor<double>({1, 2, 4, 5}, 3);
  auto flow = random_tensor<double>({1, 2, 4, 5}, 4, -1.6, 1.6);
  auto report = grad_check([](auto in) { return warp(in[0], in[1]); }, {feat, flow}, 1e-6, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_error.size() == 2);
}

TEST_CASE("integer flow uses the lower cell for its one-sided derivative") {
  // At an integer sample the derivative w.r.t. u is f(x0 + 1) - f(x0).
  Tensor<double> f({1, 1, 1, 3}, std::vector<double>{1.0, 4.0, 9.0});
  auto feat = make_constant(f);
  auto flow = make_leaf(constant_flow<double>(1, 1, 3, 0.0, 0.0));
  backward(sum(warp(feat, flow)));
  CHECK(flow.grad().at(0, 0, 0, 0) == 3.0);
  CHECK(flow.grad().at(0, 0, 0, 1) == 5.0);
  CHECK(flow.grad().at(0, 0, 0, 2) == -9.0);  // right neighbour is outside (zero)
}

TEST_CASE("cost volume of all-ones features is one at zero offset") {
  Tensor<float> ones({1, 4, 3, 3}, 1.0f);
  auto cv = correlation_cost_volume(make_constant(ones), make_constant(ones), 1);
  const auto& t = cv.tensor.value();
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) CHECK(t.at(0, cost_volume_channel(0, 0, 1), y, x) == 1.0f);
}

TEST_CASE("cost volume channel count is (2d + 1)^2") {
  auto c = make_constant(Tensor<float>({1, 2, 9, 9}));
  CHECK(correlation_cost_volume(c, c, 4).tensor.value().channels() == 81);
  CHECK(cost_volume_channels(4) == 81);
  CHECK(correlation_cost_volume(c, c, 0).tensor.value().channels() == 1);
}

TEST_CASE("cost volume matches the triple-loop oracle") {
  auto a = random_tensor<double>({1, 3, 5, 5}, 5);
  auto b = random_tensor<double>({1, 3, 5, 5}, 6);
  auto cv = correlation_cost_volume(make_constant(a), make_constant(b), 2);
  CHECK(cv.search_range == 2);
  CHECK(max_abs_diff(cv.tensor.value(), pwc::testing::naive_cost_volume(a, b, 2)) < 1e-14);
}

TEST_CASE("cost volume channel ordering is row-major over (dy, dx)") {
  // A single bright pixel in cw at (2, 3) seen from c1 pixel (1, 1).
  Tensor<float> a({1, 1, 4, 5}, 1.0f), b({1, 1, 4, 5});
  b.at(0, 0, 2, 3) = 1.0f;
  auto cv = correlation_cost_volume(make_constant(a), make_constant(b), 2).tensor.value();
  CHECK(cv.at(0, cost_volume_channel(1, 2, 2), 1, 1) == 1.0f);
  CHECK(cost_volume_channel(1, 2, 2) == 3 * 5 + 4);
  CHECK(cost_volume_channel(-2, -2, 2) == 0);
}

TEST_CASE("self-correlation at zero offset is the scaled squared norm") {
  auto c = random_tensor<double>({2, 3, 4, 4}, 7);
  auto cv = correlation_cost_volume(make_constant(c), make_constant(c), 0).tensor.value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        double n2 = 0;
        for (std::size_t k = 0; k < 3; ++k) n2 += c.at(b, k, y, x) * c.at(b, k, y, x);
        CHECK(cv.at(b, 0, y, x) >= 0.0);
        CHECK(cv.at(b, 0, y, x) == doctest::Approx(n2 / 3.0).epsilon(1e-14));
      }
}

TEST_CASE("cost volume scales linearly in each argument") {
  auto a = random_tensor<double>({1, 2, 4, 4}, 8);
  auto b = random_tensor<double>({1, 2, 4, 4}, 9);
  auto base = correlation_cost_volume(make_constant(a), make_constant(b), 1).tensor.value();
  auto sa = correlation_cost_volume(scale(make_constant(a), -1.5), make_constant(b), 1).tensor.value();
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(sa[i] == doctest::Approx(-1.5 * base[i]));
}

TEST_CASE("cost volume gradients and shape errors") {
  auto report = grad_check(
      [](auto in) { return correlation_cost_volume(in[0], in[1], 2).tensor; },
      {random_tensor<double>({1, 3, 4, 5}, 10), random_tensor<double>({1, 3, 4, 5}, 11)}, 1e-5,
      1e-4);
  CHECK(report.passed);
  auto a = make_constant(Tensor<float>({1, 3, 4, 4}));
  auto b = make_constant(Tensor<float>({1, 2, 4, 4}));
  CHECK_THROWS_AS(correlation_cost_volume(a, b, 1), DimensionError);
}

TEST_CASE("upsample_and_rescale_flow doubles displacements") {
  FlowField<float> coarse{make_constant(constant_flow<float>(1, 3, 4, 3.0f, -1.0f)),
                          FlowScale::pixel_units, 3};
  auto fine = upsample_and_rescale_flow(coarse);
  CHECK(fine.level == 2);
  const auto& t = fine.tensor.value();
  CHECK(t.shape() == Shape{1, 2, 6, 8});
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      CHECK(t.at(0, 0, y, x) == 6.0f);
      CHECK(t.at(0, 1, y, x) == -2.0f);
    }
  FlowField<float> zero{make_constant(Tensor<float>({1, 2, 2, 2})), FlowScale::pixel_units, 1};
  auto up = upsample_and_rescale_flow(zero);
  for (float v : up.tensor.value().data()) CHECK(v == 0.0f);
}

TEST_CASE("upsample_and_rescale_flow then pool-and-halve recovers constant flow") {
  FlowField<double> coarse{make_constant(constant_flow<double>(1, 3, 3, 0.7, -2.3)),
                           FlowScale::pixel_units, 4};
  auto fine = upsample_and_rescale_flow(coarse);
  auto back = scale(avg_pool2x(fine.tensor), 0.5).value();
  CHECK(back == coarse.tensor.value());
}

TEST_CASE("upsample_and_rescale_flow gradients and unit checks") {
  auto report = grad_check(
      [](auto in) {
        return upsample_and_rescale_flow(FlowField<double>{in[0], FlowScale::pixel_units, 3}).tensor;
      },
      {random_tensor<double>({1, 2, 4, 4}, 12)}, 1e-5, 1e-4);
  CHECK(report.passed);
  FlowField<float> internal{make_constant(Tensor<float>({1, 2, 2, 2})), FlowScale::internal_scale, 3};
  CHECK_THROWS(upsample_and_rescale_flow(internal));
}

TEST_CASE("scale_flow converts internal scale to level pixels") {
  FlowField<float> f2{make_constant(Tensor<float>({1, 2, 1, 1}, 1.0f)), FlowScale::internal_scale, 2};
  auto p2 = scale_flow(f2, 20.0f / 4.0f);
  CHECK(p2.tensor.value()[0] == 5.0f);
  CHECK(p2.scale == FlowScale::pixel_units);

  auto same = scale_flow(f2, 1.0f);
  CHECK(same.tensor.value() == f2.tensor.value());
  CHECK(same.scale == FlowScale::internal_scale);

  FlowField<float> f4{make_constant(Tensor<float>({1, 2, 1, 1}, 0.2f)), FlowScale::internal_scale, 4};
  auto p4 = scale_flow(f4, float(internal_to_pixels(4)));
  CHECK(internal_to_pixels(4) == 1.25);
  CHECK(p4.tensor.value()[0] == doctest::Approx(0.25f));
  CHECK(p4.scale == FlowScale::pixel_units);
}
