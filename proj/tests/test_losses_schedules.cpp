#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "pwc/grad_check.hpp"
#include "pwc/losses.hpp"
#include "pwc/optimizer.hpp"
#include "pwc/schedule.hpp"
#include "test_util.hpp"

using namespace pwc;
using pwc::testing::random_tensor;

namespace {

// Builds a prediction/supervision pair over `levels` where prediction equals
// supervision everywhere (zero flow, full mask) on level sizes 2^(7-l).
struct Pair {
  MultiLevelFlow<double> pred;
  Supervision<double> sup;
};

Pair matching_pair(std::initializer_list<int> levels) {
  Pair p;
  for (int l : levels) {
    const std::size_t n = std::size_t{1} << (7 - l);
    p.pred.flows[l] = {make_leaf(Tensor<double>({1, 2, n, n})), FlowScale::internal_scale, l};
    p.sup[l] = {Tensor<double>({1, 2, n, n}), Tensor<double>({1, 1, n, n}, 1.0)};
  }
  return p;
}

LossConfig single_level(int level) {
  LossConfig c;
  c.alpha = {{level, 1.0}};
  c.gamma = 0.0;
  return c;
}

double robust_pixel_grad(double du) {
  auto pred = make_leaf(Tensor<double>({1, 2, 1, 1}, std::vector<double>{du, 0.0}));
  backward(masked_robust_sum(pred, Tensor<double>({1, 2, 1, 1}), Tensor<double>({1, 1, 1, 1}, 1.0),
                             0.01, 0.4));
  return pred.grad()[0];
}

}  // namespace

TEST_CASE("multi-scale loss worked examples") {
  ParameterStore<double> none;
  {
    auto p = matching_pair({2, 3, 4, 5, 6});
    LossConfig c;
    c.gamma = 0.0;
    CHECK(multiscale_loss(p.pred, p.sup, none, c).value()[0] == 0.0);
  }
  {
    MultiLevelFlow<double> pred;
    pred.flows[2] = {make_leaf(Tensor<double>({1, 2, 1, 1}, std::vector<double>{3.0, 4.0})),
                     FlowScale::internal_scale, 2};
    Supervision<double> sup;
    sup[2] = {Tensor<double>({1, 2, 1, 1}), Tensor<double>({1, 1, 1, 1}, 1.0)};
    CHECK(multiscale_loss(pred, sup, none, single_level(2)).value()[0] ==
          doctest::Approx(5.0).epsilon(1e-12));
  }
  {
    auto p = matching_pair({2, 3, 4, 5, 6});
    p.pred.flows[6].tensor.mutable_value().at(0, 0, 0, 1) = 1.0;
    LossConfig c;
    c.gamma = 0.0;
    CHECK(std::abs(multiscale_loss(p.pred, p.sup, none, c).value()[0] - 0.32) < 1e-6);
  }
}

TEST_CASE("robust loss worked examples") {
  ParameterStore<double> none;
  MultiLevelFlow<double> pred;
  pred.flows[3] = {make_leaf(Tensor<double>({1, 2, 1, 1})), FlowScale::internal_scale, 3};
  Supervision<double> sup;
  sup[3] = {Tensor<double>({1, 2, 1, 1}), Tensor<double>({1, 1, 1, 1}, 1.0)};
  const double floor_value = std::exp(0.4 * std::log(0.01));
  CHECK(std::abs(robust_loss(pred, sup, none, single_level(3)).value()[0] - floor_value) < 1e-6);
  CHECK(std::abs(floor_value - 0.1585) < 1e-4);

  pred.flows[3].tensor.mutable_value() = Tensor<double>({1, 2, 1, 1}, std::vector<double>{1.0, -1.0});
  const double expected = std::exp(0.4 * std::log(2.01));
  CHECK(std::abs(robust_loss(pred, sup, none, single_level(3)).value()[0] - expected) < 1e-6);
  CHECK(std::abs(expected - 1.3222) < 1e-4);
}

TEST_CASE("robust penalty gradient shrinks as the deviation grows") {
  double prev = robust_pixel_grad(1.0);
  for (double du : {1.5, 2.0, 4.0, 8.0, 16.0}) {
    const double g = robust_pixel_grad(du);
    CHECK(g > 0.0);
    CHECK(g < prev);
    prev = g;
  }
  CHECK(robust_pixel_grad(-2.0) == doctest::Approx(-robust_pixel_grad(2.0)));
}

TEST_CASE("masked pixels contribute no loss and no gradient") {
  auto pred = make_leaf(random_tensor<double>({2, 2, 3, 3}, 1, -50.0, 50.0));
  Tensor<double> gt({2, 2, 3, 3});
  Tensor<double> mask({2, 1, 3, 3});
  mask.at(1, 0, 2, 2) = 1.0;
  auto epe = masked_epe_sum(pred, gt, mask);
  const double u = pred.value().at(1, 0, 2, 2), v = pred.value().at(1, 1, 2, 2);
  CHECK(epe.value()[0] == doctest::Approx(std::hypot(u, v)));
  backward(epe);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
          if (b == 1 && y == 2 && x == 2) continue;
          CHECK(pred.grad().at(b, c, y, x) == 0.0);
        }
  mask.fill(0.0);
  auto pred2 = make_leaf(pred.value());
  auto rob = masked_robust_sum(pred2, gt, mask, 0.01, 0.4);
  CHECK(rob.value()[0] == 0.0);
  backward(rob);
  for (double g : pred2.grad().data()) CHECK(g == 0.0);
}

TEST_CASE("losses are non-negative and vanish only at the supervision") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto pred = make_constant(random_tensor<double>({1, 2, 4, 4}, s));
    auto gt = random_tensor<double>({1, 2, 4, 4}, s + 100);
    Tensor<double> mask({1, 1, 4, 4}, 1.0);
    CHECK(masked_epe_sum(pred, gt, mask).value()[0] > 0.0);
    CHECK(masked_epe_sum(pred, pred.value(), mask).value()[0] == 0.0);
    const double floor_sum = 16 * std::pow(0.01, 0.4);
    CHECK(masked_robust_sum(pred, gt, mask, 0.01, 0.4).value()[0] > floor_sum);
    CHECK(masked_robust_sum(pred, pred.value(), mask, 0.01, 0.4).value()[0] ==
          doctest::Approx(floor_sum));
  }
}

TEST_CASE("loss gradients pass finite differences") {
  auto gt = random_tensor<double>({2, 2, 4, 5}, 3);
  auto mask = random_tensor<double>({2, 1, 4, 5}, 4, 0.0, 1.0);
  for (auto& m : mask.data()) m = m > 0.3 ? 1.0 : 0.0;
  auto pred = random_tensor<double>({2, 2, 4, 5}, 5);
  auto epe = grad_check([&](auto in) { return masked_epe_sum(in[0], gt, mask); }, {pred}, 1e-6, 1e-3);
  CHECK(epe.passed);
  auto rob = grad_check([&](auto in) { return masked_robust_sum(in[0], gt, mask, 0.01, 0.4); },
                        {pred}, 1e-6, 1e-3);
  CHECK(rob.passed);

  ParameterStore<double> params;
  params.add("w", random_tensor<double>({3, 4}, 6));
  auto wd = grad_check(
      [](auto in) {
        ParameterStore<double> p;
        p.adopt("w", in[0]);
        return weight_decay(p, 0.0004);
      },
      {params.get("w").value()}, 1e-6, 1e-3);
  CHECK(wd.passed);
}

TEST_CASE("weight decay is gamma times the squared parameter norm") {
  ParameterStore<double> params;
  params.add("a", Tensor<double>({2}, std::vector<double>{1.0, -2.0}));
  params.add("b", Tensor<double>({1}, std::vector<double>{3.0}));
  CHECK(weight_decay(params, 0.0004).value()[0] == doctest::Approx(0.0004 * 14.0));

  auto p = matching_pair({2, 3, 4, 5, 6});
  LossConfig c;
  CHECK(multiscale_loss(p.pred, p.sup, params, c).value()[0] == doctest::Approx(0.0004 * 14.0));
}

TEST_CASE("level mismatch between prediction and supervision is an error") {
  ParameterStore<double> none;
  auto p = matching_pair({2, 3, 4});
  auto q = matching_pair({2, 3, 5});
  LossConfig c;
  CHECK_THROWS_AS(multiscale_loss(p.pred, q.sup, none, c), std::invalid_argument);
  auto r = matching_pair({2, 3});
  CHECK_THROWS_AS(robust_loss(p.pred, r.sup, none, c), std::invalid_argument);
  LossConfig bad;
  bad.q = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = LossConfig{};
  bad.alpha[4] = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("supervision preparation") {
  Tensor<double> gt({1, 2, 32, 32});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) gt.at(0, 0, y, x) = 20.0;
  Tensor<double> full({1, 1, 32, 32}, 1.0);
  auto sup = prepare_supervision(gt, full, 2, 5);
  REQUIRE(sup.size() == 4);
  for (const auto& [l, s] : sup) {
    CHECK(s.flow.height() == 32u >> l);
    for (std::size_t y = 0; y < s.flow.height(); ++y)
      for (std::size_t x = 0; x < s.flow.width(); ++x) {
        CHECK(s.flow.at(0, 0, y, x) == 1.0);
        CHECK(s.flow.at(0, 1, y, x) == 0.0);
        CHECK(s.mask.at(0, 0, y, x) == 1.0);
      }
  }
  auto none = prepare_supervision(gt, Tensor<double>({1, 1, 32, 32}), 2, 5);
  for (const auto& [l, s] : none)
    for (double m : s.mask.data()) CHECK(m == 0.0);
  auto zero = prepare_supervision(Tensor<double>({1, 2, 32, 32}), full, 2, 5);
  for (const auto& [l, s] : zero)
    for (double v : s.flow.data()) CHECK(v == 0.0);

  // Only valid pixels are averaged.
  Tensor<double> g({1, 2, 2, 2}, std::vector<double>{40, 80, 0, 0, 20, 20, 20, 20});
  Tensor<double> m({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0});
  auto one = prepare_supervision(g, m, 1, 1);
  CHECK(one.at(1).flow[0] == 2.0);
  CHECK(one.at(1).flow[1] == 1.0);
  CHECK(one.at(1).mask[0] == 1.0);
  CHECK_THROWS_AS(prepare_supervision(g, m, 1, 2), DimensionError);
  CHECK_THROWS_AS(prepare_supervision(g, Tensor<double>({1, 1, 2, 3}), 1, 1), DimensionError);
}

TEST_CASE("s_long learning rates") {
  auto s = ScheduleSpec::s_long();
  CHECK(lr_at(s, 0) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(s, 500000) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(s, 900000) == doctest::Approx(1.25e-5).epsilon(1e-12));
  CHECK(lr_at(s, 399999) == doctest::Approx(1e-4));
  CHECK(lr_at(s, 400000) == doctest::Approx(5e-5));
  CHECK(lr_at(s, 1200000) == doctest::Approx(6.25e-6));
  CHECK(lr_at(ScheduleSpec::s_fine(), 0) == doctest::Approx(1e-5));
  CHECK(lr_at(ScheduleSpec::s_fine(), 250000) == doctest::Approx(5e-6));
}

TEST_CASE("disruptions restart the rate and re-apply milestones") {
  auto s = ScheduleSpec::disrupted_ft();
  REQUIRE(s.disruptions.size() == 2);
  CHECK(lr_at(s, 299999) == doctest::Approx(1e-5 / 16));
  CHECK(lr_at(s, 300000) == doctest::Approx(0.5e-5));
  // Second segment is half as long, so milestones come at half the offsets.
  CHECK(lr_at(s, 349999) == doctest::Approx(0.5e-5));
  CHECK(lr_at(s, 350000) == doctest::Approx(0.25e-5));
  CHECK(lr_at(s, 450000) == doctest::Approx(0.25e-5));

  ScheduleSpec custom;
  custom.base_lr = 1.0;
  custom.milestones = {{10, 0.1}};
  custom.disruptions = {{50, 0.5, 1.0}};
  CHECK(lr_at(custom, 9) == 1.0);
  CHECK(lr_at(custom, 10) == doctest::Approx(0.1));
  CHECK(lr_at(custom, 50) == 0.5);
  CHECK(lr_at(custom, 60) == doctest::Approx(0.05));
}

TEST_CASE("learning rate is positive and non-increasing between disruptions") {
  for (auto kind : {ScheduleKind::s_long, ScheduleKind::s_fine, ScheduleKind::disrupted_ft,
                    ScheduleKind::rob_mixed}) {
    auto s = ScheduleSpec::of_kind(kind);
    CHECK(s.kind == kind);
    CHECK(schedule_kind_from_string(to_string(kind)) == kind);
    double prev = lr_at(s, 0);
    for (long it = 1000; it <= 1500000; it += 1000) {
      const double lr = lr_at(s, it);
      CHECK(lr > 0.0);
      bool restart = false;
      for (const auto& d : s.disruptions) restart = restart || (d.iteration > it - 1000 && d.iteration <= it);
      if (!restart) CHECK(lr <= prev);
      prev = lr;
    }
  }
  CHECK_THROWS_AS(schedule_kind_from_string("cosine"), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(ScheduleSpec::s_long(), -1), std::invalid_argument);
}

TEST_CASE("schedule validation") {
  ScheduleSpec s;
  s.milestones = {{100, 0.5}, {100, 0.5}};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.milestones = {{200, 0.5}, {100, 0.5}};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.milestones = {{100, 0.5}};
  s.base_lr = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParameterStore<double> p;
  p.add("w", random_tensor<double>({3}, 7));
  const auto before = p.get("w").value();
  p.get("w").grad_buffer();
  AdamOptimizer<double> opt;
  opt.step(p, 0.1);
  CHECK(p.get("w").value() == before);
  CHECK(opt.steps() == 1);
}

TEST_CASE("adam: one step moves against the gradient") {
  ParameterStore<double> p;
  auto& w = p.add("w", Tensor<double>({1}, 0.5));
  w.grad_buffer()[0] = 1.0;
  AdamOptimizer<double> opt;
  opt.step(p, 0.1);
  CHECK(w.value()[0] < 0.5);
  CHECK(w.value()[0] == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("adam: converges on a quadratic bowl") {
  ParameterStore<double> p;
  auto& w = p.add("theta", Tensor<double>({1}, 1.0));
  AdamOptimizer<double> opt;
  for (int i = 0; i < 200; ++i) {
    p.zero_grad();
    backward(sum_squares(w));
    opt.step(p, 0.1);
  }
  CHECK(std::abs(w.value()[0]) < 1e-3);
}

TEST_CASE("adam: non-finite gradient names the parameter and updates nothing") {
  ParameterStore<double> p;
  p.add("good", Tensor<double>({2}, 1.0)).grad_buffer()[0] = 1.0;
  p.add("bad.weight", Tensor<double>({2}, 1.0)).grad_buffer()[1] =
      std::numeric_limits<double>::quiet_NaN();
  AdamOptimizer<double> opt;
  try {
    opt.step(p, 0.1);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
  CHECK(p.get("good").value()[0] == 1.0);
  CHECK(opt.steps() == 0);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParameterStore<float> p;
    auto& w = p.add("w", random_tensor<float>({5}, 8));
    AdamOptimizer<float> opt;
    for (int i = 0; i < 20; ++i) {
      p.zero_grad();
      backward(sum_squares(w));
      opt.step(p, 0.01);
    }
    return w.value();
  };
  CHECK(run() == run());
}
