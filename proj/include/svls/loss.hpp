#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "svls/error.hpp"
#include "svls/volume.hpp"

namespace svls {

/// Predictions are clamped below at this value before taking the log.
inline constexpr double kLogClamp = 1e-12;

/// Pre-softmax scores; finite values only.
template <typename T>
class BasicLogitVolume : public ClassGrid<T> {
 public:
  BasicLogitVolume(Geometry geometry, std::size_t num_classes, std::vector<T> values)
      : ClassGrid<T>(geometry, num_classes, std::move(values)) {
    const auto vals = this->values();
    for (std::size_t i = 0; i < vals.size(); ++i)
      if (!std::isfinite(static_cast<double>(vals[i]))) {
        const std::size_t v = i % this->voxel_count();
        fail(ErrorKind::validation, describe_voxel(geometry, v),
             describe_voxel(geometry, v) + " holds a non-finite logit");
      }
  }
};

using LogitVolume = BasicLogitVolume<float>;

enum class Reduction { mean, sum };

struct LossReport {
  double total = 0.0;                     // nats
  std::optional<std::vector<double>> per_voxel;
};

template <typename T>
BasicSoftLabelVolume<T> softmax(const BasicLogitVolume<T>& logits) {
  const std::size_t n = logits.voxel_count();
  const std::size_t classes = logits.num_classes();
  require(classes >= 2, ErrorKind::invalid_argument, "num_classes",
          "softmax needs at least 2 classes");
  std::vector<T> values(classes * n);
  std::vector<double> e(classes);
  for (std::size_t v = 0; v < n; ++v) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) peak = std::max(peak, double(logits.at(c, v)));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += e[c] = std::exp(double(logits.at(c, v)) - peak);
    for (std::size_t c = 0; c < classes; ++c) values[c * n + v] = static_cast<T>(e[c] / z);
  }
  return BasicSoftLabelVolume<T>::trusted(logits.geometry(), classes, std::move(values));
}

template <typename U, typename V>
void require_same_layout(const ClassGrid<U>& a, const ClassGrid<V>& b) {
  require(a.geometry().same_shape(b.geometry()) && a.num_classes() == b.num_classes(),
          ErrorKind::shape_mismatch, "shape", "operands differ in dims or class count");
}

/// -sum_c target_c log(max(predicted_c, 1e-12)) per voxel, reduced over voxels.
template <typename T, typename U>
LossReport cross_entropy(const BasicSoftLabelVolume<T>& target,
                         const BasicSoftLabelVolume<U>& predicted,
                         Reduction reduction = Reduction::mean, bool keep_per_voxel = false) {
  require_same_layout(target, predicted);
  const std::size_t n = target.voxel_count();
  std::vector<double> per_voxel(n);
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double ce = 0.0;
    for (std::size_t c = 0; c < target.num_classes(); ++c) {
      const double t = target.at(c, v);
      if (t == 0.0) continue;
      ce -= t * std::log(std::max(double(predicted.at(c, v)), kLogClamp));
    }
    per_voxel[v] = ce;
    total += ce;
  }
  LossReport report;
  report.total = reduction == Reduction::mean ? total / static_cast<double>(n) : total;
  if (keep_per_voxel) report.per_voxel = std::move(per_voxel);
  return report;
}

/// d CE / d logits = softmax(logits) - target, per voxel.
template <typename T, typename U>
ClassGrid<U> ce_gradient(const BasicSoftLabelVolume<T>& target,
                         const BasicLogitVolume<U>& logits) {
  require_same_layout(target, logits);
  const auto probs = softmax(logits);
  std::vector<U> grad(probs.values().size());
  const auto p = probs.values();
  const auto t = target.values();
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = static_cast<U>(double(p[i]) - double(t[i]));
  return ClassGrid<U>(logits.geometry(), logits.num_classes(), std::move(grad));
}

}  // namespace svls
