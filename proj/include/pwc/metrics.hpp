#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pwc/tensor.hpp"

namespace pwc {

struct MetricReport {
  double aepe = 0.0;    // pixels
  double fl_all = 0.0;  // percent
  std::size_t n_valid = 0;
};

/// pred, gt: B x 2 x H x W in pixels; mask: B x 1 x H x W (nonzero = valid).
/// Throws std::invalid_argument when no pixel is valid.
template <typename T>
double aepe(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask);

/// Percentage of valid pixels whose end-point error exceeds both 3 px and 5%
/// of the ground-truth magnitude.
template <typename T>
double fl_all(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask);

template <typename T>
MetricReport evaluate(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask);

/// Pixel-weighted combination of per-sample reports.
MetricReport aggregate(const std::vector<MetricReport>& reports);

/// Header "name,aepe,fl_all,n_valid", one row per sample, then an "all" row.
void write_metrics_csv(std::ostream& out, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports);

}  // namespace pwc
