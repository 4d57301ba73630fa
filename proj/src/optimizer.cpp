#include "pwc/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace pwc {

template <typename T>
void AdamOptimizer<T>::step(ParameterStore<T>& params, double lr) {
  for (const auto& [name, v] : params) {
    if (!v.has_grad()) continue;
    // g - g is NaN exactly for inf and NaN; the sum keeps the loop vectorisable.
    T probe{0};
    for (T g : v.grad().data()) probe += g - g;
    if (probe != T{0}) throw std::runtime_error("optimizer: non-finite gradient in parameter '" + name + "'");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (auto& [name, v] : params) {
    auto& mo = moments_[name];
    auto w = v.mutable_value().data();
    if (mo.m.size() != w.size()) {
      mo.m.assign(w.size(), T{0});
      mo.v.assign(w.size(), T{0});
    }
    const T b1 = static_cast<T>(kBeta1), b2 = static_cast<T>(kBeta2);
    const T step = static_cast<T>(lr / c1), inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(kEpsilon);
    const T* g = v.has_grad() ? v.grad().raw() : nullptr;
    T* m = mo.m.data();
    T* s2 = mo.v.data();
    T* wp = w.data();
    const std::size_t n = w.size();
    for (std::size_t i = 0; i < n; ++i) {
      // Parameters without a gradient see g = 0: moments decay.
      const T gi = g ? g[i] : T{0};
      m[i] = b1 * m[i] + (T{1} - b1) * gi;
      s2[i] = b2 * s2[i] + (T{1} - b2) * gi * gi;
      wp[i] -= step * m[i] / (std::sqrt(s2[i] * inv_c2) + eps);
    }
  }
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace pwc
