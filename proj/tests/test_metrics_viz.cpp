#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "pwc/metrics.hpp"
#include "pwc/viz.hpp"
#include "test_util.hpp"

using namespace pwc;

namespace {

Tensor<double> constant_flow(std::size_t h, std::size_t w, double u, double v) {
  Tensor<double> f({1, 2, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      f.at(0, 0, y, x) = u;
      f.at(0, 1, y, x) = v;
    }
  return f;
}

Tensor<double> full_mask(std::size_t h, std::size_t w) { return Tensor<double>({1, 1, h, w}, 1.0); }

std::array<std::uint8_t, 3> color_of(double u, double v, std::optional<double> max_norm = 1.0) {
  return flow_to_color(constant_flow(1, 1, u, v), max_norm).at(0, 0);
}

}  // namespace

TEST_CASE("aepe examples") {
  auto gt = pwc::testing::random_tensor<double>({1, 2, 4, 4}, 1, -5, 5);
  CHECK(aepe(gt, gt, full_mask(4, 4)) == 0.0);
  auto pred = gt;
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      pred.at(0, 0, y, x) += 3.0;
      pred.at(0, 1, y, x) += 4.0;
    }
  CHECK(aepe(pred, gt, full_mask(4, 4)) == doctest::Approx(5.0).epsilon(1e-12));

  // Left half: error 2 and masked out; right half: error 0 and valid.
  auto half = constant_flow(2, 4, 0, 0);
  auto mask = full_mask(2, 4);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) {
      half.at(0, 0, y, x) = 2.0;
      mask.at(0, 0, y, x) = 0.0;
    }
  auto zero = constant_flow(2, 4, 0, 0);
  auto r = evaluate(half, zero, mask);
  CHECK(r.aepe == 0.0);
  CHECK(r.n_valid == 4);
  CHECK(aepe(half, zero, full_mask(2, 4)) == 1.0);
  CHECK_THROWS_AS(aepe(half, zero, Tensor<double>({1, 1, 2, 4})), std::invalid_argument);
}

TEST_CASE("fl_all outlier rule") {
  // Error 5 at magnitude 10: outlier.
  CHECK(fl_all(constant_flow(1, 1, 15, 0), constant_flow(1, 1, 10, 0), full_mask(1, 1)) == 100.0);
  // Error 2: below the 3 px gate.
  CHECK(fl_all(constant_flow(1, 1, 2, 0), constant_flow(1, 1, 0, 0), full_mask(1, 1)) == 0.0);
  // Error 4 at magnitude 100: 4% < 5%.
  CHECK(fl_all(constant_flow(1, 1, 0, 104), constant_flow(1, 1, 0, 100), full_mask(1, 1)) == 0.0);
  // One outlier among four.
  auto pred = constant_flow(2, 2, 0, 0);
  pred.at(0, 0, 1, 1) = 10.0;
  CHECK(fl_all(pred, constant_flow(2, 2, 0, 0), full_mask(2, 2)) == 25.0);
}

TEST_CASE("metric properties") {
  auto gt = pwc::testing::random_tensor<double>({1, 2, 6, 6}, 2, -8, 8);
  auto pred = pwc::testing::random_tensor<double>({1, 2, 6, 6}, 3, -8, 8);
  auto mask = full_mask(6, 6);
  const double base = aepe(pred, gt, mask);
  auto shift = [](Tensor<double> t) {
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 6; ++x) {
        t.at(0, 0, y, x) += 1.7;
        t.at(0, 1, y, x) -= 0.6;
      }
    return t;
  };
  CHECK(aepe(shift(pred), shift(gt), mask) == doctest::Approx(base).epsilon(1e-12));

  // Scaling every error up cannot lower Fl-all.
  double prev = -1;
  for (double k : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    auto p = gt;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += k * (pred[i] - gt[i]);
    const double f = fl_all(p, gt, mask);
    CHECK(f >= prev);
    prev = f;
  }

  // Masked metric equals the metric on the masked sub-image.
  auto m = full_mask(6, 6);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) m.at(0, 0, y, x) = (y >= 2 && x < 3) ? 1.0 : 0.0;
  Tensor<double> sp({1, 2, 4, 3}), sg({1, 2, 4, 3});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        sp.at(0, c, y, x) = pred.at(0, c, y + 2, x);
        sg.at(0, c, y, x) = gt.at(0, c, y + 2, x);
      }
  CHECK(aepe(pred, gt, m) == doctest::Approx(aepe(sp, sg, full_mask(4, 3))).epsilon(1e-12));
  CHECK(fl_all(pred, gt, m) == doctest::Approx(fl_all(sp, sg, full_mask(4, 3))));
}

TEST_CASE("metrics CSV has a fixed header and an aggregate row") {
  std::ostringstream os;
  write_metrics_csv(os, {"a", "b"}, {{1.0, 0.0, 10}, {4.0, 50.0, 30}});
  CHECK(os.str() == "name,aepe,fl_all,n_valid\na,1,0,10\nb,4,50,30\nall,3.25,37.5,40\n");
}

TEST_CASE("colour wheel layout") {
  ColorWheel wheel;
  REQUIRE(wheel.size() == 55);
  CHECK(wheel[0] == std::array<double, 3>{255, 0, 0});
  CHECK(wheel[15] == std::array<double, 3>{255, 255, 0});
  CHECK(wheel[21] == std::array<double, 3>{0, 255, 0});
  CHECK(wheel[25] == std::array<double, 3>{0, 255, 255});
  CHECK(wheel[36] == std::array<double, 3>{0, 0, 255});
  CHECK(wheel[49] == std::array<double, 3>{255, 0, 255});
  // Adjacent entries, including the wrap, never jump by more than one GC step.
  for (std::size_t i = 0; i < 55; ++i)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(wheel[i][c] - wheel[(i + 1) % 55][c]) <= 255.0 / 4 + 1e-9);
}

TEST_CASE("zero flow is white, clamping and symmetry") {
  auto img = flow_to_color(constant_flow(3, 4, 0, 0), 1.0);
  for (auto b : img.rgb) CHECK(b == 255);
  auto auto_zero = flow_to_color(constant_flow(3, 4, 0, 0));
  for (auto b : auto_zero.rgb) CHECK(b == 255);

  CHECK(color_of(2.0, 0.0) == color_of(1.0, 0.0));
  CHECK(color_of(0.0, -6.0) == color_of(0.0, -1.0));

  auto a = color_of(0.6, 0.0), b = color_of(-0.6, 0.0);
  CHECK(a != b);
  // Equal saturation: the smallest channel sits at the same level.
  const auto min_a = *std::min_element(a.begin(), a.end()), min_b = *std::min_element(b.begin(), b.end());
  CHECK(std::abs(int(min_a) - int(min_b)) <= 1);
}

TEST_CASE("colour is invariant to joint rescaling") {
  auto flow = pwc::testing::random_tensor<double>({1, 2, 5, 5}, 4, -3, 3);
  auto scaled = flow;
  for (auto& v : scaled.data()) v *= 7.0;
  CHECK(flow_to_color(flow, 2.0).rgb == flow_to_color(scaled, 14.0).rgb);
  CHECK(flow_to_color(flow).rgb == flow_to_color(scaled).rgb);
}

TEST_CASE("rotating flow rotates hue") {
  ColorWheel wheel;
  const double pi = std::acos(-1.0);
  const double step = 2 * pi / 55;
  for (int j = 0; j < 55; ++j) {
    // atan2(-v, -u) = (2 j / 55 - 1) pi lands exactly on entry j.
    const double phi = (2.0 * j / 55 - 1) * pi;
    for (int k : {1, 5, 13}) {
      const double rot = phi + k * step;
      const auto c = color_of(-std::cos(rot), -std::sin(rot));
      const auto& expect = wheel[(j + k) % 55];
      for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(double(c[ch]) - expect[ch]) <= 1.0);
    }
  }
}

TEST_CASE("non-finite vectors are black and counted") {
  auto flow = constant_flow(2, 2, 1, 1);
  flow.at(0, 0, 0, 1) = std::numeric_limits<double>::quiet_NaN();
  flow.at(0, 1, 1, 0) = std::numeric_limits<double>::infinity();
  auto img = flow_to_color(flow);
  CHECK(img.non_finite == 2);
  CHECK(img.at(0, 1) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(img.at(1, 0) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(img.at(0, 0) != std::array<std::uint8_t, 3>{0, 0, 0});
}

TEST_CASE("automatic normalisation uses the 99th percentile") {
  Tensor<double> flow({1, 2, 10, 10});
  for (std::size_t i = 0; i < 100; ++i) flow.at(0, 0, i / 10, i % 10) = double(i + 1);
  auto img = flow_to_color(flow);
  CHECK(img.max_norm == 99.0);
  CHECK_THROWS_AS(flow_to_color(flow, 0.0), std::invalid_argument);
}
