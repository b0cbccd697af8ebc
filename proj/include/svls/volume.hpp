#pragma once

// Label and per-class probability volumes, replicate padding, one-hot
// encoding and argmax decoding.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "svls/error.hpp"

namespace svls {

using Label = std::uint8_t;
inline constexpr std::size_t kMaxClasses = 256;

/// Per-voxel probability sums must equal 1 within this tolerance.
inline constexpr double kSimplexTolerance = 1e-6;

/// Voxel index (slowest axis first).
using Index3 = std::array<std::size_t, 3>;

/// Grid layout shared by every volume type. Storage is always three axes,
/// slowest first; a rank-2 grid keeps `extents[0] == 1` and ignores
/// `spacing[0]`.
struct Geometry {
  int rank = 3;
  std::array<std::size_t, 3> extents{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  static Geometry planar(std::size_t rows, std::size_t cols, double row_mm = 1.0,
                         double col_mm = 1.0) {
    Geometry g{2, {1, rows, cols}, {1.0, row_mm, col_mm}};
    g.validate();
    return g;
  }

  static Geometry volumetric(std::size_t d0, std::size_t d1, std::size_t d2,
                             std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0}) {
    Geometry g{3, {d0, d1, d2}, spacing_mm};
    g.validate();
    return g;
  }

  /// Builds a geometry from rank-length dimension and spacing lists.
  static Geometry from_dims(std::span<const std::size_t> dims,
                            std::span<const double> spacing_mm = {}) {
    require(dims.size() == 2 || dims.size() == 3, ErrorKind::invalid_argument, "rank",
            "volumes must have 2 or 3 axes, got " + std::to_string(dims.size()));
    require(spacing_mm.empty() || spacing_mm.size() == dims.size(), ErrorKind::invalid_argument,
            "spacing", "spacing must list one value per axis");
    Geometry g;
    g.rank = static_cast<int>(dims.size());
    const std::size_t offset = 3 - dims.size();
    for (std::size_t a = 0; a < dims.size(); ++a) {
      g.extents[offset + a] = dims[a];
      if (!spacing_mm.empty()) g.spacing[offset + a] = spacing_mm[a];
    }
    g.validate();
    return g;
  }

  void validate() const {
    require(rank == 2 || rank == 3, ErrorKind::invalid_argument, "rank",
            "rank must be 2 or 3");
    require(rank == 3 || extents[0] == 1, ErrorKind::invalid_argument, "dims",
            "rank-2 geometry must have a unit leading axis");
    for (std::size_t a = first_axis(); a < 3; ++a) {
      require(extents[a] >= 1, ErrorKind::invalid_argument, "dims", "every axis needs extent >= 1");
      require(std::isfinite(spacing[a]) && spacing[a] > 0.0, ErrorKind::invalid_argument,
              "spacing", "spacing must be finite and strictly positive");
    }
  }

  /// First storage axis that belongs to the volume (1 for rank 2).
  std::size_t first_axis() const { return rank == 2 ? 1 : 0; }

  std::size_t voxel_count() const { return extents[0] * extents[1] * extents[2]; }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * extents[1] + y) * extents[2] + x;
  }

  Index3 coordinates(std::size_t v) const {
    const std::size_t x = v % extents[2];
    const std::size_t rest = v / extents[2];
    return {rest / extents[1], rest % extents[1], x};
  }

  std::vector<std::size_t> dims() const {
    return {extents.begin() + static_cast<std::ptrdiff_t>(first_axis()), extents.end()};
  }

  std::vector<double> spacing_mm() const {
    return {spacing.begin() + static_cast<std::ptrdiff_t>(first_axis()), spacing.end()};
  }

  bool same_shape(const Geometry& other) const {
    return rank == other.rank && extents == other.extents;
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

inline std::string describe_voxel(const Geometry& g, std::size_t v) {
  const Index3 c = g.coordinates(v);
  std::ostringstream out;
  out << "voxel[" << v << "] at (";
  if (g.rank == 3) out << c[0] << ",";
  out << c[1] << "," << c[2] << ")";
  return out.str();
}

/// Integer class map; every value lies in [0, num_classes).
class LabelVolume {
 public:
  LabelVolume(Geometry geometry, std::size_t num_classes, std::vector<Label> labels)
      : geometry_(geometry), num_classes_(num_classes), labels_(std::move(labels)) {
    geometry_.validate();
    require(num_classes_ >= 1 && num_classes_ <= kMaxClasses, ErrorKind::invalid_argument,
            "num_classes", "num_classes must be in [1, 256]");
    require(labels_.size() == geometry_.voxel_count(), ErrorKind::validation, "data",
            "label count does not match the product of dims");
    for (std::size_t v = 0; v < labels_.size(); ++v)
      if (labels_[v] >= num_classes_)
        fail(ErrorKind::validation, describe_voxel(geometry_, v),
             describe_voxel(geometry_, v) + " holds class " + std::to_string(labels_[v]) +
                 " outside [0, " + std::to_string(num_classes_) + ")");
  }

  LabelVolume(Geometry geometry, std::size_t num_classes, Label fill = 0)
      : LabelVolume(geometry, num_classes, std::vector<Label>(geometry.voxel_count(), fill)) {}

  const Geometry& geometry() const { return geometry_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }
  std::span<const Label> labels() const { return labels_; }
  Label operator[](std::size_t v) const { return labels_[v]; }
  Label at(std::size_t z, std::size_t y, std::size_t x) const {
    return labels_[geometry_.index(z, y, x)];
  }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Geometry geometry_;
  std::size_t num_classes_;
  std::vector<Label> labels_;
};

/// Class-major storage: each class plane is contiguous.
template <typename T>
class ClassGrid {
 public:
  using value_type = T;

  ClassGrid(Geometry geometry, std::size_t num_classes, std::vector<T> values)
      : geometry_(geometry), num_classes_(num_classes), values_(std::move(values)) {
    geometry_.validate();
    require(num_classes_ >= 1, ErrorKind::invalid_argument, "num_classes",
            "num_classes must be positive");
    require(values_.size() == num_classes_ * geometry_.voxel_count(), ErrorKind::validation,
            "data", "value count does not match num_classes x product of dims");
  }

  const Geometry& geometry() const { return geometry_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t voxel_count() const { return geometry_.voxel_count(); }
  std::span<const T> values() const { return values_; }
  std::span<const T> plane(std::size_t c) const {
    return std::span<const T>(values_).subspan(c * voxel_count(), voxel_count());
  }
  T at(std::size_t c, std::size_t v) const { return values_[c * voxel_count() + v]; }

  /// Copies the per-class vector of voxel `v` into `out`.
  void gather(std::size_t v, std::span<T> out) const {
    for (std::size_t c = 0; c < num_classes_; ++c) out[c] = at(c, v);
  }

  friend bool operator==(const ClassGrid&, const ClassGrid&) = default;

 protected:
  Geometry geometry_;
  std::size_t num_classes_;
  std::vector<T> values_;
};

/// Per-voxel probability vectors on the simplex.
template <typename T>
class BasicSoftLabelVolume : public ClassGrid<T> {
 public:
  /// Validates every voxel; throws `ErrorKind::validation` naming the first
  /// offending voxel.
  BasicSoftLabelVolume(Geometry geometry, std::size_t num_classes, std::vector<T> values,
                       double tolerance = kSimplexTolerance)
      : ClassGrid<T>(geometry, num_classes, std::move(values)) {
    require(num_classes >= 2, ErrorKind::invalid_argument, "num_classes",
            "probability volumes need at least 2 classes");
    const std::size_t bad = first_off_simplex(tolerance);
    if (bad != this->voxel_count())
      fail(ErrorKind::validation, describe_voxel(this->geometry_, bad),
           describe_voxel(this->geometry_, bad) +
               " is not a probability vector (values in [0,1] summing to 1)");
  }

  /// For volumes produced by this library's own transforms, whose outputs are
  /// on the simplex by construction. Checked only in debug builds.
  static BasicSoftLabelVolume trusted(Geometry geometry, std::size_t num_classes,
                                      std::vector<T> values) {
    BasicSoftLabelVolume out(TrustedTag{}, geometry, num_classes, std::move(values));
    assert(out.first_off_simplex(kSimplexTolerance) == out.voxel_count());
    return out;
  }

  /// Returns the index of the first voxel that is off the simplex, or
  /// voxel_count() when all are valid.
  std::size_t first_off_simplex(double tolerance) const {
    const std::size_t n = this->voxel_count();
    for (std::size_t v = 0; v < n; ++v) {
      double sum = 0.0;
      for (std::size_t c = 0; c < this->num_classes_; ++c) {
        const double p = this->at(c, v);
        if (!(p >= 0.0 && p <= 1.0)) return v;
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance) return v;
    }
    return n;
  }

 private:
  struct TrustedTag {};
  BasicSoftLabelVolume(TrustedTag, Geometry geometry, std::size_t num_classes,
                       std::vector<T> values)
      : ClassGrid<T>(geometry, num_classes, std::move(values)) {}
};

using SoftLabelVolume = BasicSoftLabelVolume<float>;

/// Read-only view of one scalar grid that maps any out-of-range index to
/// the nearest in-range voxel on each axis.
template <typename T>
class PaddedView {
 public:
  PaddedView(std::span<const T> grid, const Geometry& geometry, std::size_t width)
      : grid_(grid), geometry_(geometry), width_(width) {
    require(grid.size() == geometry.voxel_count(), ErrorKind::shape_mismatch, "grid",
            "grid size does not match geometry");
  }

  std::size_t width() const { return width_; }
  const Geometry& geometry() const { return geometry_; }

  T at(std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) const {
    return grid_[geometry_.index(clamp_axis(z, 0), clamp_axis(y, 1), clamp_axis(x, 2))];
  }

  /// Rank-2 convenience accessor.
  T at(std::ptrdiff_t y, std::ptrdiff_t x) const { return at(0, y, x); }

 private:
  std::size_t clamp_axis(std::ptrdiff_t i, std::size_t axis) const {
    const auto hi = static_cast<std::ptrdiff_t>(geometry_.extents[axis]) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, hi));
  }

  std::span<const T> grid_;
  Geometry geometry_;
  std::size_t width_;
};

template <typename T>
PaddedView<T> replicate_pad(std::span<const T> grid, const Geometry& geometry, std::size_t width) {
  return PaddedView<T>(grid, geometry, width);
}

template <typename T = float>
BasicSoftLabelVolume<T> one_hot_encode(const LabelVolume& labels) {
  require(labels.num_classes() >= 2, ErrorKind::invalid_argument, "num_classes",
          "one-hot encoding needs at least 2 classes");
  const std::size_t n = labels.size();
  std::vector<T> values(labels.num_classes() * n, T(0));
  for (std::size_t v = 0; v < n; ++v) values[labels[v] * n + v] = T(1);
  return BasicSoftLabelVolume<T>::trusted(labels.geometry(), labels.num_classes(),
                                          std::move(values));
}

/// Index of the largest entry; ties resolve to the lowest class index.
template <typename T>
std::size_t argmax_class(const ClassGrid<T>& grid, std::size_t v) {
  std::size_t best = 0;
  T best_value = grid.at(0, v);
  for (std::size_t c = 1; c < grid.num_classes(); ++c) {
    const T p = grid.at(c, v);
    if (p > best_value) {
      best_value = p;
      best = c;
    }
  }
  return best;
}

inline constexpr double kArgmaxSumTolerance = 1e-3;

template <typename T>
LabelVolume argmax_labels(const BasicSoftLabelVolume<T>& probs) {
  require(probs.num_classes() <= kMaxClasses, ErrorKind::invalid_argument, "num_classes",
          "too many classes for a label volume");
  const std::size_t n = probs.voxel_count();
  std::vector<Label> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.num_classes(); ++c) sum += probs.at(c, v);
    if (std::abs(sum - 1.0) > kArgmaxSumTolerance)
      fail(ErrorKind::validation, describe_voxel(probs.geometry(), v),
           describe_voxel(probs.geometry(), v) + " probabilities sum to " + std::to_string(sum));
    labels[v] = static_cast<Label>(argmax_class(probs, v));
  }
  return LabelVolume(probs.geometry(), probs.num_classes(), std::move(labels));
}

}  // namespace svls
