#pragma once

// Soft-label targets from expert annotations: one-hot, uniform label
// smoothing, spatially varying label smoothing (SVLS), and the two
// multi-rater fusions (mean of per-rater SVLS, mean of per-rater one-hot).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svls/error.hpp"
#include "svls/kernel.hpp"
#include "svls/parallel.hpp"
#include "svls/volume.hpp"

namespace svls {

enum class SmoothingMethod { one_hot, ls, svls, msvls, moh };

inline std::string_view to_string(SmoothingMethod m) {
  switch (m) {
    case SmoothingMethod::one_hot: return "onehot";
    case SmoothingMethod::ls: return "ls";
    case SmoothingMethod::svls: return "svls";
    case SmoothingMethod::msvls: return "msvls";
    case SmoothingMethod::moh: return "moh";
  }
  return "unknown";
}

inline SmoothingMethod parse_smoothing_method(std::string_view name) {
  if (name == "onehot" || name == "one_hot") return SmoothingMethod::one_hot;
  if (name == "ls") return SmoothingMethod::ls;
  if (name == "svls") return SmoothingMethod::svls;
  if (name == "msvls") return SmoothingMethod::msvls;
  if (name == "moh") return SmoothingMethod::moh;
  fail(ErrorKind::invalid_argument, "method", "unknown smoothing method '" + std::string(name) + "'");
}

struct SmoothingSpec {
  SmoothingMethod method = SmoothingMethod::svls;
  double alpha = 0.0;  // ls only
  double sigma = kDefaultSigma;  // svls / msvls only

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::invalid_argument, "alpha",
            "alpha must lie in [0, 1]");
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::invalid_argument, "sigma",
            "sigma must be > 0");
  }
};

/// D >= 1 annotations of the same grid.
class RaterSet {
 public:
  explicit RaterSet(std::vector<LabelVolume> raters) : raters_(std::move(raters)) {
    require(!raters_.empty(), ErrorKind::invalid_argument, "raters", "rater set is empty");
    const auto& first = raters_.front();
    for (std::size_t j = 1; j < raters_.size(); ++j) {
      const auto& r = raters_[j];
      require(r.geometry() == first.geometry() && r.num_classes() == first.num_classes(),
              ErrorKind::shape_mismatch, "raters",
              "rater " + std::to_string(j) + " differs from rater 0 in shape, spacing or classes");
    }
  }

  std::size_t size() const { return raters_.size(); }
  const LabelVolume& operator[](std::size_t j) const { return raters_[j]; }
  const Geometry& geometry() const { return raters_.front().geometry(); }
  std::size_t num_classes() const { return raters_.front().num_classes(); }
  auto begin() const { return raters_.begin(); }
  auto end() const { return raters_.end(); }

 private:
  std::vector<LabelVolume> raters_;
};

template <typename T = float>
BasicSoftLabelVolume<T> label_smooth(const LabelVolume& labels, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::invalid_argument, "alpha",
          "alpha must lie in [0, 1]");
  require(labels.num_classes() >= 2, ErrorKind::invalid_argument, "num_classes",
          "label smoothing needs at least 2 classes");
  const std::size_t n = labels.size();
  const double off = alpha / static_cast<double>(labels.num_classes());
  const double on = (1.0 - alpha) + off;
  std::vector<T> values(labels.num_classes() * n, static_cast<T>(off));
  for (std::size_t v = 0; v < n; ++v) values[labels[v] * n + v] = static_cast<T>(on);
  return BasicSoftLabelVolume<T>::trusted(labels.geometry(), labels.num_classes(),
                                          std::move(values));
}

namespace detail {

// Accumulates kernel taps into per-class sums for every voxel of one class
// map. Equivalent to correlating each one-hot class plane with the kernel
// over a replicate-padded grid, done in a single pass over the labels.
template <typename Emit>
void svls_accumulate(const LabelVolume& labels, const SvlsKernel& kernel, Execution exec,
                     Emit&& emit) {
  const Geometry& g = labels.geometry();
  require(kernel.rank == g.rank, ErrorKind::shape_mismatch, "rank",
          "kernel rank " + std::to_string(kernel.rank) + " does not match volume rank " +
              std::to_string(g.rank));
  require(labels.num_classes() >= 2, ErrorKind::invalid_argument, "num_classes",
          "smoothing needs at least 2 classes");

  const auto nz = static_cast<std::ptrdiff_t>(g.extents[0]);
  const auto ny = static_cast<std::ptrdiff_t>(g.extents[1]);
  const auto nx = static_cast<std::ptrdiff_t>(g.extents[2]);
  const std::size_t classes = labels.num_classes();
  const std::span<const Label> data = labels.labels();
  const std::size_t taps = kernel.taps.size();

  parallel_for(static_cast<std::size_t>(nz * ny), exec, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(classes);
    std::vector<const Label*> rows(taps);
    std::vector<std::ptrdiff_t> dx(taps);
    for (std::size_t t = 0; t < taps; ++t) dx[t] = kernel.offsets[t].dx;

    for (std::size_t row = begin; row < end; ++row) {
      const auto z = static_cast<std::ptrdiff_t>(row) / ny;
      const auto y = static_cast<std::ptrdiff_t>(row) % ny;
      for (std::size_t t = 0; t < taps; ++t) {
        const auto zz = std::clamp<std::ptrdiff_t>(z + kernel.offsets[t].dz, 0, nz - 1);
        const auto yy = std::clamp<std::ptrdiff_t>(y + kernel.offsets[t].dy, 0, ny - 1);
        rows[t] = data.data() + (zz * ny + yy) * nx;
      }
      const std::size_t base = row * static_cast<std::size_t>(nx);
      for (std::ptrdiff_t x = 0; x < nx; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t = 0; t < taps; ++t) {
          const auto xx = std::clamp<std::ptrdiff_t>(x + dx[t], 0, nx - 1);
          acc[rows[t][xx]] += kernel.taps[t];
        }
        emit(base + static_cast<std::size_t>(x), std::span<const double>(acc));
      }
    }
  });
}

}  // namespace detail

/// Per-class convolution of the one-hot planes with the kernel, divided by
/// the kernel's total weight. Output sums to one per voxel by construction.
template <typename T = float>
BasicSoftLabelVolume<T> svls_smooth(const LabelVolume& labels, const SvlsKernel& kernel,
                                    Execution exec = {}) {
  const std::size_t n = labels.size();
  std::vector<T> values(labels.num_classes() * n);
  const double total = kernel.total_weight;
  detail::svls_accumulate(labels, kernel, exec, [&](std::size_t v, std::span<const double> acc) {
    for (std::size_t c = 0; c < acc.size(); ++c) values[c * n + v] = static_cast<T>(acc[c] / total);
  });
  return BasicSoftLabelVolume<T>::trusted(labels.geometry(), labels.num_classes(),
                                          std::move(values));
}

/// Mean over raters of each rater's SVLS soft labels (smooth first, then
/// average; never the reverse). Normalized by the full rater count D.
template <typename T = float>
BasicSoftLabelVolume<T> msvls_fuse(const RaterSet& raters, const SvlsKernel& kernel,
                                   Execution exec = {}) {
  const std::size_t n = raters.geometry().voxel_count();
  const std::size_t classes = raters.num_classes();
  std::vector<double> sum(classes * n, 0.0);
  for (const auto& rater : raters) {
    const double total = kernel.total_weight;
    detail::svls_accumulate(rater, kernel, exec, [&](std::size_t v, std::span<const double> acc) {
      for (std::size_t c = 0; c < classes; ++c) sum[c * n + v] += acc[c] / total;
    });
  }
  const double d = static_cast<double>(raters.size());
  std::vector<T> values(sum.size());
  std::transform(sum.begin(), sum.end(), values.begin(),
                 [d](double s) { return static_cast<T>(s / d); });
  return BasicSoftLabelVolume<T>::trusted(raters.geometry(), classes, std::move(values));
}

/// Per-voxel vote fractions.
template <typename T = float>
BasicSoftLabelVolume<T> moh_fuse(const RaterSet& raters) {
  require(raters.num_classes() >= 2, ErrorKind::invalid_argument, "num_classes",
          "fusion needs at least 2 classes");
  const std::size_t n = raters.geometry().voxel_count();
  std::vector<std::size_t> votes(raters.num_classes() * n, 0);
  for (const auto& rater : raters)
    for (std::size_t v = 0; v < n; ++v) ++votes[rater[v] * n + v];
  const double d = static_cast<double>(raters.size());
  std::vector<T> values(votes.size());
  std::transform(votes.begin(), votes.end(), values.begin(),
                 [d](std::size_t k) { return static_cast<T>(static_cast<double>(k) / d); });
  return BasicSoftLabelVolume<T>::trusted(raters.geometry(), raters.num_classes(),
                                          std::move(values));
}

/// Dispatches on `spec.method`. Single-annotation methods require exactly
/// one rater.
template <typename T = float>
BasicSoftLabelVolume<T> make_soft_labels(const RaterSet& raters, const SmoothingSpec& spec,
                                         Execution exec = {}) {
  spec.validate();
  const bool single = spec.method == SmoothingMethod::one_hot ||
                      spec.method == SmoothingMethod::ls || spec.method == SmoothingMethod::svls;
  require(!single || raters.size() == 1, ErrorKind::invalid_argument, "raters",
          std::string(to_string(spec.method)) + " takes exactly one annotation");
  switch (spec.method) {
    case SmoothingMethod::one_hot: return one_hot_encode<T>(raters[0]);
    case SmoothingMethod::ls: return label_smooth<T>(raters[0], spec.alpha);
    case SmoothingMethod::svls:
      return svls_smooth<T>(raters[0], svls_weights(raters.geometry().rank, spec.sigma), exec);
    case SmoothingMethod::msvls:
      return msvls_fuse<T>(raters, svls_weights(raters.geometry().rank, spec.sigma), exec);
    case SmoothingMethod::moh: return moh_fuse<T>(raters);
  }
  fail(ErrorKind::invalid_argument, "method", "unknown smoothing method");
}

}  // namespace svls
