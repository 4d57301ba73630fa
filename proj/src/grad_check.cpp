#include "pwc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pwc {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double gmax = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    gmax = std::max({gmax, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  const double floor = 1e-3 * gmax;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    if (diff == 0.0) continue;
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

namespace {

std::string locate(const char* what, std::size_t input, std::size_t element) {
  std::ostringstream os;
  os << "non-finite " << what << " at input " << input << ", element " << element;
  return os.str();
}

}  // namespace

GradCheckReport grad_check(const DiffFn& op, const std::vector<Tensor<double>>& inputs,
                           double epsilon, double tolerance, std::uint64_t projection_seed) {
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      if (!std::isfinite(inputs[i][k])) {
        report.failure = locate("input value", i, k);
        return report;
      }
    }
  }

  auto evaluate = [&](const std::vector<Tensor<double>>& xs, std::vector<Var<double>>* leaves) {
    std::vector<Var<double>> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(make_leaf<double>(x));
    Var<double> out = op(vars);
    if (leaves) *leaves = vars;
    return out;
  };

  // Projection weights are drawn once from the unperturbed output's shape.
  std::vector<Var<double>> leaves;
  Var<double> out = evaluate(inputs, &leaves);
  for (std::size_t k = 0; k < out.value().size(); ++k) {
    if (!std::isfinite(out.value()[k])) {
      report.failure = locate("output value", 0, k);
      return report;
    }
  }
  Tensor<double> proj(out.shape());
  std::mt19937_64 rng(projection_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : proj.data()) v = u(rng);

  backward(out, proj);

  auto projected = [&](const std::vector<Tensor<double>>& xs) {
    Var<double> o = evaluate(xs, nullptr);
    double s = 0.0;
    for (std::size_t k = 0; k < proj.size(); ++k) s += o.value()[k] * proj[k];
    return s;
  };

  report.passed = true;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].size();
    std::vector<double> analytic(n, 0.0), numeric(n, 0.0);
    if (leaves[i].has_grad()) {
      auto g = leaves[i].grad().data();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double x0 = work[i][k];
      work[i][k] = x0 + epsilon;
      const double fp = projected(work);
      work[i][k] = x0 - epsilon;
      const double fm = projected(work);
      work[i][k] = x0;
      numeric[k] = (fp - fm) / (2.0 * epsilon);
      if (!std::isfinite(numeric[k]) || !std::isfinite(analytic[k])) {
        report.failure = locate("gradient", i, k);
        report.passed = false;
        report.max_rel_error.push_back(INFINITY);
        return report;
      }
    }
    const double err = gradient_relative_error(analytic, numeric);
    report.max_rel_error.push_back(err);
    if (err > tolerance) report.passed = false;
  }
  return report;
}

GradCheckReport grad_check_parameters(const std::function<Var<double>()>& loss,
                                      ParameterStore<double>& params, std::size_t count,
                                      double epsilon, double tolerance, std::uint64_t seed) {
  GradCheckReport report;
  std::vector<std::pair<Var<double>*, std::size_t>> picks;
  std::vector<std::pair<Var<double>*, std::size_t>> all;
  for (auto& [name, v] : params) {
    for (std::size_t k = 0; k < v.value().size(); ++k) all.emplace_back(&v, k);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  picks.assign(all.begin(), all.begin() + std::min(count, all.size()));

  params.zero_grad();
  Var<double> l = loss();
  if (!std::isfinite(l.value()[0])) {
    report.failure = "non-finite loss";
    return report;
  }
  backward(l);

  std::vector<double> analytic, numeric;
  for (std::size_t p = 0; p < picks.size(); ++p) {
    auto [var, k] = picks[p];
    analytic.push_back(var->has_grad() ? var->grad()[k] : 0.0);
    double& x = var->mutable_value()[k];
    const double x0 = x;
    x = x0 + epsilon;
    const double fp = loss().value()[0];
    x = x0 - epsilon;
    const double fm = loss().value()[0];
    x = x0;
    numeric.push_back((fp - fm) / (2.0 * epsilon));
    if (!std::isfinite(numeric.back()) || !std::isfinite(analytic.back())) {
      report.failure = locate("parameter gradient", p, k);
      report.max_rel_error.push_back(INFINITY);
      return report;
    }
  }
  params.zero_grad();
  const double err = gradient_relative_error(analytic, numeric);
  report.max_rel_error.push_back(err);
  report.passed = err <= tolerance;
  return report;
}

}  // namespace pwc
