#pragma once

// Central finite-difference verification of analytic gradients (64-bit).
//
// The operator output is projected onto a fixed random tensor to obtain a
// scalar, so one backward pass yields the full input gradient. Per element,
//   err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-3 * g_max)
// where g_max is the largest gradient magnitude of that input; components
// seven orders below the input's gradient scale are thus compared absolutely.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pwc/autodiff.hpp"
#include "pwc/parameter_store.hpp"

namespace pwc {

using DiffFn = std::function<Var<double>(std::span<const Var<double>>)>;

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per input
  bool passed = false;
  std::string failure;  // non-empty on non-finite values

  double worst() const;
};

GradCheckReport grad_check(const DiffFn& op, const std::vector<Tensor<double>>& inputs,
                           double epsilon, double tolerance, std::uint64_t projection_seed = 0);

/// Checks d(loss)/d(theta) for `count` randomly chosen scalar parameters.
GradCheckReport grad_check_parameters(const std::function<Var<double>()>& loss,
                                      ParameterStore<double>& params, std::size_t count,
                                      double epsilon, double tolerance, std::uint64_t seed);

/// Relative error as defined above, for one input's gradient pair.
double gradient_relative_error(std::span<const double> analytic,
                               std::span<const double> numeric);

}  // namespace pwc
