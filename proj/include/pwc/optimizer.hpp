#pragma once

#include <cstdint>
#include <unordered_map>

#include "pwc/parameter_store.hpp"

namespace pwc {

/// Adam with beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 and bias correction.
/// Parameters without an accumulated gradient are treated as zero-gradient.
template <typename T>
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// Throws std::runtime_error naming the parameter on a non-finite gradient;
  /// nothing is updated in that case.
  void step(ParameterStore<T>& params, double lr);

  std::int64_t steps() const { return steps_; }

 private:
  struct Moments {
    std::vector<T> m, v;  // same precision as the parameters
  };
  std::unordered_map<std::string, Moments> moments_;
  std::int64_t steps_ = 0;
};

extern template class AdamOptimizer<float>;
extern template class AdamOptimizer<double>;

}  // namespace pwc
