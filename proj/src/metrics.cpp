#include "pwc/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace pwc {
namespace {

template <typename T, typename Fn>
std::size_t for_each_valid(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                           Fn fn) {
  require_rank4(pred, "metrics");
  if (pred.shape() != gt.shape() || pred.channels() != 2) {
    throw DimensionError("metrics: prediction " + shape_to_string(pred.shape()) +
                         " vs ground truth " + shape_to_string(gt.shape()));
  }
  const std::size_t B = pred.batch(), H = pred.height(), W = pred.width();
  if (mask.shape() != Shape{B, 1, H, W}) {
    throw DimensionError("metrics: mask " + shape_to_string(mask.shape()));
  }
  std::size_t n = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (mask.at(b, 0, y, x) == T{0}) continue;
        const double gu = gt.at(b, 0, y, x), gv = gt.at(b, 1, y, x);
        const double err = std::hypot(double(pred.at(b, 0, y, x)) - gu, double(pred.at(b, 1, y, x)) - gv);
        fn(err, std::hypot(gu, gv));
        ++n;
      }
  if (n == 0) throw std::invalid_argument("metrics: mask has no valid pixels");
  return n;
}

}  // namespace

template <typename T>
MetricReport evaluate(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
  double sum = 0;
  std::size_t outliers = 0;
  const std::size_t n = for_each_valid(pred, gt, mask, [&](double err, double mag) {
    sum += err;
    if (err > 3.0 && err > 0.05 * mag) ++outliers;
  });
  return {sum / double(n), 100.0 * double(outliers) / double(n), n};
}

template <typename T>
double aepe(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
  return evaluate(pred, gt, mask).aepe;
}

template <typename T>
double fl_all(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
  return evaluate(pred, gt, mask).fl_all;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  MetricReport all;
  double epe = 0, outliers = 0;
  for (const auto& r : reports) {
    epe += r.aepe * double(r.n_valid);
    outliers += r.fl_all * double(r.n_valid);
    all.n_valid += r.n_valid;
  }
  if (all.n_valid == 0) throw std::invalid_argument("aggregate: no valid pixels");
  all.aepe = epe / double(all.n_valid);
  all.fl_all = outliers / double(all.n_valid);
  return all;
}

void write_metrics_csv(std::ostream& out, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports) {
  if (names.size() != reports.size()) throw std::invalid_argument("metrics csv: name count mismatch");
  out << "name,aepe,fl_all,n_valid\n" << std::setprecision(9);
  for (std::size_t i = 0; i < names.size(); ++i)
    out << names[i] << ',' << reports[i].aepe << ',' << reports[i].fl_all << ',' << reports[i].n_valid << '\n';
  const MetricReport all = aggregate(reports);
  out << "all," << all.aepe << ',' << all.fl_all << ',' << all.n_valid << '\n';
}

#define PWC_INSTANTIATE_METRICS(T)                                                     \
  template MetricReport evaluate(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template double aepe(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template double fl_all(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

PWC_INSTANTIATE_METRICS(float)
PWC_INSTANTIATE_METRICS(double)

}  // namespace pwc
