#pragma once

// Deterministic synthetic label volumes, rater sets and miscalibrated
// predictions for tests and demos.
//
// Randomness comes from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Values are mapped to integers and unit reals by the
// helpers below rather than <random> distributions, whose algorithms are
// implementation-defined, so outputs are identical across platforms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "svls/error.hpp"
#include "svls/softlabel.hpp"
#include "svls/volume.hpp"

namespace svls {

enum class PhantomKind {
  homogeneous,
  isolated_center,
  straight_boundary,
  nested_spheres,
  fig3_multirater,
  miscalibrated_pred
};

inline std::string_view to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::homogeneous: return "homogeneous";
    case PhantomKind::isolated_center: return "isolated_center";
    case PhantomKind::straight_boundary: return "straight_boundary";
    case PhantomKind::nested_spheres: return "nested_spheres";
    case PhantomKind::fig3_multirater: return "fig3_multirater";
    case PhantomKind::miscalibrated_pred: return "miscalibrated_pred";
  }
  return "unknown";
}

inline PhantomKind parse_phantom_kind(std::string_view name) {
  for (auto k : {PhantomKind::homogeneous, PhantomKind::isolated_center,
                 PhantomKind::straight_boundary, PhantomKind::nested_spheres,
                 PhantomKind::fig3_multirater, PhantomKind::miscalibrated_pred})
    if (name == to_string(k)) return k;
  fail(ErrorKind::invalid_argument, "kind", "unknown phantom kind '" + std::string(name) + "'");
}

struct PhantomSpec {
  PhantomKind kind = PhantomKind::homogeneous;
  std::vector<std::size_t> dims{8, 8, 8};
  std::vector<double> spacing;  // mm per axis; empty means 1 mm
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;
  double strength = 0.0;        // miscalibrated_pred only
  Label foreground = 1;         // class A of homogeneous / isolated_center / straight_boundary
  // nested_spheres: ascending radii in voxels, one per foreground class. A
  // voxel's class is the number of spheres containing it. Empty = evenly
  // spaced radii filling the volume.
  std::vector<double> radii;
};

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  // SplitMix64 finalizer decorrelates nearby (seed, stream) pairs.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return std::mt19937_64(z ^ (z >> 31));
}

inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  return rng() % n;
}

namespace detail {

inline std::array<double, 3> phantom_center(const Geometry& g) {
  return {(double(g.extents[0]) - 1.0) / 2.0, (double(g.extents[1]) - 1.0) / 2.0,
          (double(g.extents[2]) - 1.0) / 2.0};
}

inline void require_min_extent(const Geometry& g, std::size_t minimum, const char* kind) {
  for (std::size_t a = g.first_axis(); a < 3; ++a)
    require(g.extents[a] >= minimum, ErrorKind::invalid_argument, "dims",
            std::string(kind) + " needs every axis >= " + std::to_string(minimum));
}

inline std::vector<double> nested_radii(const PhantomSpec& spec, const Geometry& g) {
  const std::size_t shells = spec.num_classes - 1;
  if (!spec.radii.empty()) {
    require(spec.radii.size() == shells, ErrorKind::invalid_argument, "radii",
            "nested_spheres needs one radius per foreground class");
    for (std::size_t i = 0; i < shells; ++i)
      require(spec.radii[i] >= 0.0 && (i == 0 || spec.radii[i] > spec.radii[i - 1]),
              ErrorKind::invalid_argument, "radii", "radii must be non-negative and ascending");
    return spec.radii;
  }
  std::size_t smallest = g.extents[2];
  for (std::size_t a = g.first_axis(); a < 3; ++a) smallest = std::min(smallest, g.extents[a]);
  const double outer = (double(smallest) - 1.0) / 2.0;
  std::vector<double> radii(shells);
  for (std::size_t i = 0; i < shells; ++i)
    radii[i] = outer * double(i + 1) / double(shells);
  return radii;
}

// Ring of in-plane neighbors around the center, visited in a fixed order.
inline constexpr std::array<std::array<int, 2>, 8> kRing{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}}};

inline LabelVolume fig3_rater(const Geometry& g, std::size_t num_classes, std::size_t rater) {
  // Background 0, a red (1) block of the center's 3^rank neighborhood, and
  // one blue (2) voxel on the center's in-plane ring whose position depends
  // on the rater. The center stays red for every rater.
  std::vector<Label> labels(g.voxel_count(), 0);
  const auto mid = Index3{g.extents[0] / 2, g.extents[1] / 2, g.extents[2] / 2};
  const int zr = g.rank == 3 ? 1 : 0;
  for (int dz = -zr; dz <= zr; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        labels[g.index(mid[0] + dz, mid[1] + dy, mid[2] + dx)] = 1;
  const auto& spot = kRing[(rater * 3) % kRing.size()];
  labels[g.index(mid[0], mid[1] + spot[0], mid[2] + spot[1])] = 2;
  return LabelVolume(g, num_classes, std::move(labels));
}

}  // namespace detail

inline Geometry phantom_geometry(const PhantomSpec& spec) {
  return Geometry::from_dims(spec.dims, spec.spacing);
}

inline LabelVolume generate_labels(const PhantomSpec& spec) {
  const Geometry g = phantom_geometry(spec);
  require(spec.num_classes >= 2 && spec.num_classes <= kMaxClasses, ErrorKind::invalid_argument,
          "num_classes", "phantoms need between 2 and 256 classes");
  const std::size_t n = g.voxel_count();
  std::vector<Label> labels(n, 0);
  const Label fg = spec.foreground;
  const bool uses_fg = spec.kind == PhantomKind::homogeneous ||
                       spec.kind == PhantomKind::isolated_center ||
                       spec.kind == PhantomKind::straight_boundary;
  require(!uses_fg || fg < spec.num_classes, ErrorKind::invalid_argument, "foreground",
          "foreground class out of range");

  switch (spec.kind) {
    case PhantomKind::homogeneous:
      std::fill(labels.begin(), labels.end(), fg);
      break;
    case PhantomKind::isolated_center: {
      detail::require_min_extent(g, 3, "isolated_center");
      require(fg != 0, ErrorKind::invalid_argument, "foreground",
              "isolated_center needs a foreground class other than 0");
      labels[g.index(g.extents[0] / 2, g.extents[1] / 2, g.extents[2] / 2)] = fg;
      break;
    }
    case PhantomKind::straight_boundary: {
      // Plane normal to the first volume axis; voxels at or past the middle
      // index take the foreground class.
      const std::size_t axis = g.first_axis();
      require(g.extents[axis] >= 2, ErrorKind::invalid_argument, "dims",
              "straight_boundary needs at least 2 voxels across the plane");
      const std::size_t split = g.extents[axis] / 2;
      for (std::size_t v = 0; v < n; ++v)
        if (g.coordinates(v)[axis] >= split) labels[v] = fg;
      break;
    }
    case PhantomKind::nested_spheres: {
      const auto radii = detail::nested_radii(spec, g);
      const auto c = detail::phantom_center(g);
      for (std::size_t v = 0; v < n; ++v) {
        const auto p = g.coordinates(v);
        double d2 = 0.0;
        for (std::size_t a = 0; a < 3; ++a) d2 += (double(p[a]) - c[a]) * (double(p[a]) - c[a]);
        std::size_t inside = 0;
        for (double r : radii) inside += d2 <= r * r;
        labels[v] = static_cast<Label>(inside);
      }
      break;
    }
    case PhantomKind::fig3_multirater:
      detail::require_min_extent(g, 3, "fig3_multirater");
      require(spec.num_classes >= 3, ErrorKind::invalid_argument, "num_classes",
              "fig3_multirater needs at least 3 classes");
      return detail::fig3_rater(g, spec.num_classes, 0);
    case PhantomKind::miscalibrated_pred: {
      auto rng = seeded_engine(spec.seed);
      for (auto& l : labels) l = static_cast<Label>(uniform_below(rng, spec.num_classes));
      break;
    }
  }
  return LabelVolume(g, spec.num_classes, std::move(labels));
}

/// D annotations of the base phantom, each translated by a seeded integer
/// offset of at most `jitter` voxels per axis (edges replicate). The
/// fig3_multirater kind instead moves a single blue voxel around the center
/// from rater to rater and ignores `jitter`.
inline RaterSet generate_rater_set(const PhantomSpec& spec, std::size_t raters,
                                   std::size_t jitter) {
  require(raters >= 1, ErrorKind::invalid_argument, "raters", "need at least one rater");
  std::vector<LabelVolume> out;
  out.reserve(raters);
  if (spec.kind == PhantomKind::fig3_multirater) {
    const LabelVolume base = generate_labels(spec);  // validates dims/classes
    for (std::size_t j = 0; j < raters; ++j)
      out.push_back(detail::fig3_rater(base.geometry(), spec.num_classes, j));
    return RaterSet(std::move(out));
  }

  const LabelVolume base = generate_labels(spec);
  const Geometry& g = base.geometry();
  const auto span = static_cast<std::int64_t>(jitter);
  for (std::size_t j = 0; j < raters; ++j) {
    auto rng = seeded_engine(spec.seed, 1000 + j);
    std::array<std::int64_t, 3> shift{0, 0, 0};
    for (std::size_t a = g.first_axis(); a < 3; ++a)
      shift[a] = static_cast<std::int64_t>(uniform_below(rng, 2 * jitter + 1)) - span;
    std::vector<Label> labels(g.voxel_count());
    for (std::size_t v = 0; v < labels.size(); ++v) {
      const auto p = g.coordinates(v);
      Index3 src{};
      for (std::size_t a = 0; a < 3; ++a)
        src[a] = static_cast<std::size_t>(std::clamp<std::int64_t>(
            static_cast<std::int64_t>(p[a]) - shift[a], 0,
            static_cast<std::int64_t>(g.extents[a]) - 1));
      labels[v] = base[g.index(src[0], src[1], src[2])];
    }
    out.emplace_back(g, base.num_classes(), std::move(labels));
  }
  return RaterSet(std::move(out));
}

struct MiscalibrationSpec {
  double strength = 0.0;   // confidence inflation over accuracy
  double accuracy = 0.7;   // probability that the predicted class is the label
  std::optional<double> confidence;  // overrides clamp(accuracy + strength, 0, 1)
  std::uint64_t seed = 0;
};

/// Every voxel predicts its label with probability `accuracy`, otherwise a
/// uniformly chosen other class, at a fixed confidence of
/// min(1, accuracy + strength); the rest of the mass is spread evenly. The
/// expected ECE is therefore |confidence - accuracy|, i.e. `strength` until
/// the confidence saturates.
template <typename T = float>
BasicSoftLabelVolume<T> generate_miscalibrated(const LabelVolume& labels,
                                               const MiscalibrationSpec& spec) {
  require(spec.strength >= 0.0, ErrorKind::invalid_argument, "strength", "strength must be >= 0");
  require(spec.accuracy >= 0.0 && spec.accuracy <= 1.0, ErrorKind::invalid_argument, "accuracy",
          "accuracy must lie in [0, 1]");
  const std::size_t classes = labels.num_classes();
  require(classes >= 2, ErrorKind::invalid_argument, "num_classes", "need at least 2 classes");
  const double confidence =
      spec.confidence.value_or(std::clamp(spec.accuracy + spec.strength, 0.0, 1.0));
  require(confidence > 1.0 / double(classes) && confidence <= 1.0, ErrorKind::invalid_argument,
          "confidence", "confidence must exceed 1/N so the predicted class stays the argmax");

  const std::size_t n = labels.size();
  const T rest = static_cast<T>((1.0 - confidence) / double(classes - 1));
  std::vector<T> values(classes * n, rest);
  auto rng = seeded_engine(spec.seed, 7);
  for (std::size_t v = 0; v < n; ++v) {
    const double u = uniform_unit(rng);
    const std::uint64_t other = uniform_below(rng, classes - 1);
    std::size_t cls = labels[v];
    if (u >= spec.accuracy) cls = (cls + 1 + other) % classes;
    values[cls * n + v] = static_cast<T>(confidence);
  }
  return BasicSoftLabelVolume<T>(labels.geometry(), classes, std::move(values));
}

}  // namespace svls
