#pragma once

// Registry of finite-difference checks over every differentiable operator,
// run in 64-bit for several seeds.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pwc/grad_check.hpp"

namespace pwc {

struct GradCase {
  std::string name;
  double tolerance = 1e-4;
  std::function<GradCheckReport(std::uint64_t seed, double tolerance)> run;
};

/// Per-op checks at 1e-4 and end-to-end toy-model losses at 1e-3.
std::vector<GradCase> default_grad_suite();

struct GradCaseResult {
  std::string name;
  double worst = 0.0;  // over all seeds
  double tolerance = 0.0;
  bool passed = false;
  std::string failure;
};

/// Runs every case for every seed. A case that throws counts as failed.
std::vector<GradCaseResult> run_grad_suite(const std::vector<GradCase>& cases,
                                           const std::vector<std::uint64_t>& seeds);

/// One line per case plus a summary; returns 0 iff every case passed.
int report_grad_suite(const std::vector<GradCaseResult>& results, std::ostream& out);

}  // namespace pwc
