#include "pwc/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pwc/ops.hpp"

namespace pwc {
namespace {

template <typename T>
void require_flow_pair(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                       const char* what) {
  const Tensor<T>& p = pred.value();
  require_rank4(p, what);
  if (p.shape() != gt.shape() || p.channels() != 2) {
    throw DimensionError(std::string(what) + ": prediction " + shape_to_string(p.shape()) +
                         " vs supervision " + shape_to_string(gt.shape()));
  }
  if (mask.shape() != Shape{p.batch(), 1, p.height(), p.width()}) {
    throw DimensionError(std::string(what) + ": mask shape " + shape_to_string(mask.shape()));
  }
}

// Shared driver: `penalty(du, dv, m, &gu, &gv)` returns the pixel term and
// its derivative w.r.t. (du, dv).
template <typename T, typename Penalty>
Var<T> masked_pixel_sum(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                        Penalty penalty, const char* name) {
  require_flow_pair(pred, gt, mask, name);
  const Tensor<T>& p = pred.value();
  const std::size_t B = p.batch(), HW = p.height() * p.width();
  Tensor<T> grad(p.shape());
  T total{0};
  for (std::size_t b = 0; b < B; ++b) {
    const T* pu = p.raw() + b * 2 * HW;
    const T* gu = gt.raw() + b * 2 * HW;
    const T* m = mask.raw() + b * HW;
    T* du_out = grad.raw() + b * 2 * HW;
    for (std::size_t i = 0; i < HW; ++i) {
      if (m[i] == T{0}) continue;
      const T du = pu[i] - gu[i];
      const T dv = pu[HW + i] - gu[HW + i];
      T gdu{0}, gdv{0};
      total += m[i] * penalty(du, dv, gdu, gdv);
      du_out[i] = m[i] * gdu;
      du_out[HW + i] = m[i] * gdv;
    }
  }
  return make_result<T>(
      Tensor<T>::scalar(total), {pred},
      [grad = std::move(grad)](Node<T>& node) {
        const T g = node.grad[0];
        auto gi = node.inputs[0].grad_buffer().data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g * grad[i];
      },
      name);
}

template <typename T, typename LevelTerm>
Var<T> assemble(const MultiLevelFlow<T>& pred, const Supervision<T>& sup,
                const ParameterStore<T>& params, const LossConfig& cfg, LevelTerm term) {
  cfg.validate();
  if (pred.flows.size() != sup.size()) {
    throw std::invalid_argument("loss: prediction covers " + std::to_string(pred.flows.size()) +
                                " levels, supervision " + std::to_string(sup.size()));
  }
  std::vector<Var<T>> terms;
  for (const auto& [level, s] : sup) {
    auto it = pred.flows.find(level);
    if (it == pred.flows.end()) {
      throw std::invalid_argument("loss: no prediction at supervised level " +
                                  std::to_string(level));
    }
    const double batch = static_cast<double>(s.flow.batch());
    terms.push_back(scale(term(it->second.tensor, s), static_cast<T>(cfg.alpha_at(level) / batch)));
  }
  if (cfg.gamma > 0.0) terms.push_back(weight_decay(params, cfg.gamma));
  return add_scalars<T>(terms);
}

}  // namespace

void LossConfig::validate() const {
  for (const auto& [level, a] : alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("loss config: alpha must be positive at level " +
                                                std::to_string(level));
  }
  if (!(q < 1.0) || !(q > 0.0)) throw std::invalid_argument("loss config: q must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("loss config: epsilon must be positive");
  if (gamma < 0.0) throw std::invalid_argument("loss config: gamma must be >= 0");
  if (!(flow_scale > 0.0)) throw std::invalid_argument("loss config: flow_scale must be positive");
}

double LossConfig::alpha_at(int level) const {
  auto it = alpha.find(level);
  if (it == alpha.end()) {
    throw std::invalid_argument("loss config: no alpha for level " + std::to_string(level));
  }
  return it->second;
}

template <typename T>
Supervision<T> prepare_supervision(const Tensor<T>& gt, const Tensor<T>& mask, int first_level,
                                   int last_level, double flow_scale) {
  require_rank4(gt, "prepare_supervision");
  if (gt.channels() != 2) throw DimensionError("prepare_supervision: gt must have 2 channels");
  if (mask.shape() != Shape{gt.batch(), 1, gt.height(), gt.width()}) {
    throw DimensionError("prepare_supervision: mask " + shape_to_string(mask.shape()) +
                         " does not match gt " + shape_to_string(gt.shape()));
  }
  Tensor<T> flow = gt;
  for (auto& v : flow.data()) v = static_cast<T>(v / flow_scale);
  Tensor<T> valid = mask;
  Supervision<T> out;
  for (int l = 1; l <= last_level; ++l) {
    const std::size_t B = flow.batch(), H = flow.height(), W = flow.width();
    if (H < 2 || W < 2) {
      throw DimensionError("prepare_supervision: " + std::to_string(H) + "x" + std::to_string(W) +
                           " map cannot be pooled to level " + std::to_string(l));
    }
    const std::size_t h = H / 2, w = W / 2;
    Tensor<T> f({B, 2, h, w}), m({B, 1, h, w});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          T count{0}, su{0}, sv{0};
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const T mv = valid.at(b, 0, 2 * y + dy, 2 * x + dx) > T{0} ? T{1} : T{0};
              count += mv;
              su += mv * flow.at(b, 0, 2 * y + dy, 2 * x + dx);
              sv += mv * flow.at(b, 1, 2 * y + dy, 2 * x + dx);
            }
          if (count > T{0}) {
            f.at(b, 0, y, x) = su / count;
            f.at(b, 1, y, x) = sv / count;
            m.at(b, 0, y, x) = T{1};
          }
        }
    flow = std::move(f);
    valid = std::move(m);
    if (l >= first_level) out[l] = {flow, valid};
  }
  return out;
}

template <typename T>
Var<T> masked_epe_sum(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
  return masked_pixel_sum(
      pred, gt, mask,
      [](T du, T dv, T& gu, T& gv) {
        const T n = std::sqrt(du * du + dv * dv);
        if (n > T{0}) {
          gu = du / n;
          gv = dv / n;
        }
        return n;
      },
      "masked_epe_sum");
}

template <typename T>
Var<T> masked_robust_sum(const Var<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                         double epsilon, double q) {
  const T e = static_cast<T>(epsilon), qq = static_cast<T>(q);
  return masked_pixel_sum(
      pred, gt, mask,
      [e, qq](T du, T dv, T& gu, T& gv) {
        const T t = std::abs(du) + std::abs(dv) + e;
        const T value = std::pow(t, qq);
        const T slope = qq * value / t;
        gu = du > T{0} ? slope : (du < T{0} ? -slope : T{0});
        gv = dv > T{0} ? slope : (dv < T{0} ? -slope : T{0});
        return value;
      },
      "masked_robust_sum");
}

template <typename T>
Var<T> weight_decay(const ParameterStore<T>& params, double gamma) {
  std::vector<Var<T>> squares;
  for (const auto& [name, v] : params) squares.push_back(sum_squares(v));
  return scale(add_scalars<T>(squares), static_cast<T>(gamma));
}

template <typename T>
Var<T> multiscale_loss(const MultiLevelFlow<T>& pred, const Supervision<T>& sup,
                       const ParameterStore<T>& params, const LossConfig& cfg) {
  return assemble(pred, sup, params, cfg, [](const Var<T>& p, const LevelSupervision<T>& s) {
    return masked_epe_sum(p, s.flow, s.mask);
  });
}

template <typename T>
Var<T> robust_loss(const MultiLevelFlow<T>& pred, const Supervision<T>& sup,
                   const ParameterStore<T>& params, const LossConfig& cfg) {
  return assemble(pred, sup, params, cfg, [&cfg](const Var<T>& p, const LevelSupervision<T>& s) {
    return masked_robust_sum(p, s.flow, s.mask, cfg.epsilon, cfg.q);
  });
}

#define PWC_INSTANTIATE_LOSSES(T)                                                           \
  template Supervision<T> prepare_supervision(const Tensor<T>&, const Tensor<T>&, int, int, \
                                              double);                                      \
  template Var<T> masked_epe_sum(const Var<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Var<T> masked_robust_sum(const Var<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                    double, double);                                        \
  template Var<T> weight_decay(const ParameterStore<T>&, double);                           \
  template Var<T> multiscale_loss(const MultiLevelFlow<T>&, const Supervision<T>&,          \
                                  const ParameterStore<T>&, const LossConfig&);             \
  template Var<T> robust_loss(const MultiLevelFlow<T>&, const Supervision<T>&,              \
                              const ParameterStore<T>&, const LossConfig&);

PWC_INSTANTIATE_LOSSES(float)
PWC_INSTANTIATE_LOSSES(double)

}  // namespace pwc
