#include "pwc/grad_suite.hpp"

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

#include "pwc/config.hpp"
#include "pwc/flow_ops.hpp"
#include "pwc/losses.hpp"
#include "pwc/model.hpp"
#include "pwc/ops.hpp"

namespace pwc {
namespace {

using Inputs = std::span<const Var<double>>;

Tensor<double> rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::uint64_t sub(std::uint64_t seed, std::uint64_t k) { return seed * 1000 + k; }

// Keeps values 0.05 away from integers, where bilinear sampling has kinks.
void nudge_off_integers(Tensor<double>& t) {
  for (auto& v : t.data()) {
    const double frac = v - std::floor(v);
    if (frac < 0.05 || frac > 0.95) v += 0.25;
  }
}

GradCheckReport worse(const GradCheckReport& a, const GradCheckReport& b) {
  if (a.passed != b.passed) return a.passed ? b : a;
  return a.worst() >= b.worst() ? a : b;
}

ModelConfig toy_model() {
  ModelConfig c;
  c.num_levels = 3;
  c.output_level = 2;
  c.search_range = 1;
  c.pyramid_channels = {3, 4, 5};
  c.estimator_channels = {4, 3};
  c.context_channels = {4, 3};
  c.context_dilations = {1, 2, 1};
  return c;
}

GradCheckReport toy_model_loss(std::uint64_t seed, double tol, LossKind kind) {
  const ModelConfig cfg = toy_model();
  auto params = init_parameters<double>(cfg, sub(seed, 1));
  // Non-zero biases keep activations off the leaky-ReLU kink.
  std::mt19937_64 rng(sub(seed, 2));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& [name, v] : params)
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0)
      for (auto& b : v.mutable_value().data()) b = u(rng);
  auto i1 = make_constant(rand_t({1, 3, 16, 16}, sub(seed, 3), 0.0, 1.0));
  auto i2 = make_constant(rand_t({1, 3, 16, 16}, sub(seed, 4), 0.0, 1.0));
  Tensor<double> mask({1, 1, 16, 16}, 1.0);
  mask.at(0, 0, 3, 4) = 0.0;
  const auto sup = prepare_supervision(rand_t({1, 2, 16, 16}, sub(seed, 5), -3.0, 3.0), mask, 2, 3);
  LossConfig lc;
  auto loss = [&] {
    auto pred = forward(i1, i2, cfg, params);
    return kind == LossKind::multiscale ? multiscale_loss(pred, sup, params, lc)
                                        : robust_loss(pred, sup, params, lc);
  };
  return grad_check_parameters(loss, params, 120, 1e-6, tol, sub(seed, 6));
}

// Level flows and one decayed parameter as inputs of the loss assembly.
GradCheckReport assembled_loss(std::uint64_t seed, double tol, LossKind kind) {
  Tensor<double> mask({1, 1, 16, 16}, 1.0);
  for (std::size_t x = 0; x < 5; ++x) mask.at(0, 0, 7, x) = 0.0;
  const auto sup = prepare_supervision(rand_t({1, 2, 16, 16}, sub(seed, 10), -4.0, 4.0), mask, 2, 3);
  LossConfig lc;
  lc.alpha = {{3, 0.08}, {2, 0.02}};
  auto op = [&](Inputs in) {
    MultiLevelFlow<double> pred;
    pred.flows[2] = {in[0], FlowScale::internal_scale, 2};
    pred.flows[3] = {in[1], FlowScale::internal_scale, 3};
    ParameterStore<double> p;
    p.adopt("w", in[2]);
    return kind == LossKind::multiscale ? multiscale_loss(pred, sup, p, lc) : robust_loss(pred, sup, p, lc);
  };
  return grad_check(op, {rand_t({1, 2, 4, 4}, sub(seed, 11), -0.3, 0.3), rand_t({1, 2, 2, 2}, sub(seed, 12), -0.3, 0.3),
                         rand_t({3, 2}, sub(seed, 13))},
                    1e-6, tol, sub(seed, 14));
}

}  // namespace

std::vector<GradCase> default_grad_suite() {
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", 1e-4, [](std::uint64_t s, double tol) {
                     std::optional<GradCheckReport> worst;
                     const std::vector<Tensor<double>> in{rand_t({1, 2, 6, 5}, sub(s, 1)), rand_t({3, 2, 3, 3}, sub(s, 2)),
                                                          rand_t({3}, sub(s, 3))};
                     for (auto opt : {Conv2dOptions::same3x3(1), Conv2dOptions::same3x3(2),
                                      Conv2dOptions::halving3x3()}) {
                       auto r = grad_check([opt](Inputs v) { return conv2d(v[0], v[1], v[2], opt); }, in, 1e-5, tol,
                                           sub(s, 4));
                       worst = worst ? worse(*worst, r) : r;
                     }
                     return *worst;
                   }});
  cases.push_back({"leaky_relu", 1e-4, [](std::uint64_t s, double tol) {
                     auto x = rand_t({1, 3, 4, 4}, sub(s, 1), 0.2, 2.0);
                     std::mt19937_64 rng(sub(s, 2));
                     for (auto& v : x.data())
                       if (rng() & 1) v = -v;
                     return grad_check([](Inputs v) { return leaky_relu(v[0], 0.1); }, {x}, 1e-5, tol, sub(s, 3));
                   }});
  cases.push_back({"upsample2x_bilinear", 1e-4, [](std::uint64_t s, double tol) {
                     auto even = grad_check([](Inputs v) { return upsample2x_bilinear(v[0]); },
                                            {rand_t({1, 2, 3, 4}, sub(s, 1))}, 1e-5, tol, sub(s, 2));
                     auto odd = grad_check([](Inputs v) { return upsample2x_bilinear(v[0], 7, 9); },
                                           {rand_t({1, 2, 3, 4}, sub(s, 3))}, 1e-5, tol, sub(s, 4));
                     return worse(even, odd);
                   }});
  cases.push_back({"warp", 1e-4, [](std::uint64_t s, double tol) {
                     auto flow = rand_t({1, 2, 4, 5}, sub(s, 2), -1.6, 1.6);
                     nudge_off_integers(flow);
                     return grad_check([](Inputs v) { return warp(v[0], v[1]); }, {rand_t({1, 3, 4, 5}, sub(s, 1)), flow},
                                       1e-6, tol, sub(s, 3));
                   }});
  cases.push_back({"correlation_cost_volume", 1e-4, [](std::uint64_t s, double tol) {
                     return grad_check([](Inputs v) { return correlation_cost_volume(v[0], v[1], 2).tensor; },
                                       {rand_t({1, 3, 4, 5}, sub(s, 1)), rand_t({1, 3, 4, 5}, sub(s, 2))}, 1e-5, tol,
                                       sub(s, 3));
                   }});
  cases.push_back({"upsample_and_rescale_flow", 1e-4, [](std::uint64_t s, double tol) {
                     return grad_check(
                         [](Inputs v) {
                           return upsample_and_rescale_flow(FlowField<double>{v[0], FlowScale::pixel_units, 3}).tensor;
                         },
                         {rand_t({1, 2, 4, 3}, sub(s, 1))}, 1e-5, tol, sub(s, 2));
                   }});
  cases.push_back({"multiscale_loss", 1e-4,
                   [](std::uint64_t s, double tol) { return assembled_loss(s, tol, LossKind::multiscale); }});
  cases.push_back(
      {"robust_loss", 1e-4, [](std::uint64_t s, double tol) { return assembled_loss(s, tol, LossKind::robust); }});
  cases.push_back({"context_network", 1e-4, [](std::uint64_t s, double tol) {
                     const ModelConfig cfg = toy_model();
                     auto params = init_parameters<double>(cfg, sub(s, 1));
                     std::vector<Tensor<double>> in{rand_t({1, 2, 6, 5}, sub(s, 2)), rand_t({1, 3, 6, 5}, sub(s, 3))};
                     for (const auto& [name, v] : params)
                       if (name.rfind("context.", 0) == 0) in.push_back(v.value());
                     return grad_check(
                         [&cfg](Inputs v) {
                           ParameterStore<double> p;
                           std::size_t k = 2;
                           for (const auto& spec : layer_specs(cfg)) {
                             if (spec.name.rfind("context.", 0) != 0) continue;
                             p.adopt(spec.name + ".weight", v[k++]);
                             p.adopt(spec.name + ".bias", v[k++]);
                           }
                           return context_refine(FlowField<double>{v[0], FlowScale::internal_scale, 2}, v[1], cfg, p)
                               .tensor;
                         },
                         in, 1e-6, tol, sub(s, 4));
                   }});
  cases.push_back({"avg_pool2x", 1e-4, [](std::uint64_t s, double tol) {
                     return grad_check([](Inputs v) { return avg_pool2x(v[0]); }, {rand_t({1, 2, 5, 6}, sub(s, 1))},
                                       1e-5, tol, sub(s, 2));
                   }});
  cases.push_back({"concat_pad_crop", 1e-4, [](std::uint64_t s, double tol) {
                     return grad_check(
                         [](Inputs v) {
                           const Var<double> parts[] = {v[0], v[1]};
                           return crop_spatial(pad_spatial(concat_channels<double>(parts), 6, 7), 4, 5);
                         },
                         {rand_t({1, 2, 5, 5}, sub(s, 1)), rand_t({1, 3, 5, 5}, sub(s, 2))}, 1e-5, tol, sub(s, 3));
                   }});
  cases.push_back({"toy_model_multiscale_loss", 1e-3,
                   [](std::uint64_t s, double tol) { return toy_model_loss(s, tol, LossKind::multiscale); }});
  cases.push_back({"toy_model_robust_loss", 1e-3,
                   [](std::uint64_t s, double tol) { return toy_model_loss(s, tol, LossKind::robust); }});
  return cases;
}

std::vector<GradCaseResult> run_grad_suite(const std::vector<GradCase>& cases, const std::vector<std::uint64_t>& seeds) {
  std::vector<GradCaseResult> out;
  for (const auto& c : cases) {
    GradCaseResult r{c.name, 0.0, c.tolerance, true, ""};
    for (auto seed : seeds) {
      try {
        const auto rep = c.run(seed, c.tolerance);
        r.worst = std::max(r.worst, rep.worst());
        if (!rep.passed) {
          r.passed = false;
          if (r.failure.empty())
            r.failure = "seed " + std::to_string(seed) + (rep.failure.empty() ? "" : ": " + rep.failure);
        }
      } catch (const std::exception& e) {
        r.passed = false;
        r.failure = "seed " + std::to_string(seed) + ": " + e.what();
      }
    }
    out.push_back(r);
  }
  return out;
}

int report_grad_suite(const std::vector<GradCaseResult>& results, std::ostream& out) {
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << std::left << std::setw(28) << r.name << " max_rel_error " << std::scientific << std::setprecision(3)
        << r.worst << std::defaultfloat << "  tol " << r.tolerance << "  " << (r.passed ? "ok" : "FAILED");
    if (!r.failure.empty()) out << "  (" << r.failure << ")";
    out << "\n";
    if (!r.passed) ++failed;
  }
  out << (failed ? std::to_string(failed) + " of " + std::to_string(results.size()) + " operators failed"
                 : "all " + std::to_string(results.size()) + " operators passed")
      << "\n";
  return failed ? 1 : 0;
}

}  // namespace pwc
