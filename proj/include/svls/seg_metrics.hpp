#pragma once

// Overlap (Dice) and boundary-overlap (Surface Dice at a physical tolerance)
// scores for hard segmentations.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svls/error.hpp"
#include "svls/parallel.hpp"
#include "svls/volume.hpp"

namespace svls {

/// Binary voxel mask on a geometry; nonzero bytes are inside.
struct Mask {
  Geometry geometry;
  std::vector<std::uint8_t> inside;

  std::size_t count() const {
    std::size_t k = 0;
    for (auto b : inside) k += b != 0;
    return k;
  }
};

inline Mask class_mask(const LabelVolume& labels, std::size_t class_id) {
  require(class_id < labels.num_classes(), ErrorKind::invalid_argument, "class_id",
          "class " + std::to_string(class_id) + " out of range");
  Mask m{labels.geometry(), std::vector<std::uint8_t>(labels.size())};
  for (std::size_t v = 0; v < labels.size(); ++v) m.inside[v] = labels[v] == class_id;
  return m;
}

/// Union of several classes, e.g. a compound tumor region.
inline Mask region_mask(const LabelVolume& labels, std::span<const std::size_t> class_ids) {
  Mask m{labels.geometry(), std::vector<std::uint8_t>(labels.size(), 0)};
  for (std::size_t c : class_ids) {
    require(c < labels.num_classes(), ErrorKind::invalid_argument, "class_id",
            "class " + std::to_string(c) + " out of range");
    for (std::size_t v = 0; v < labels.size(); ++v) m.inside[v] |= labels[v] == c;
  }
  return m;
}

inline void require_same_grid(const Geometry& a, const Geometry& b) {
  require(a.same_shape(b), ErrorKind::shape_mismatch, "dims", "volumes differ in dims");
  require(a.spacing_mm() == b.spacing_mm(), ErrorKind::shape_mismatch, "spacing",
          "volumes differ in spacing");
}

/// 2|T ∩ P| / (|T| + |P|); 1 when both masks are empty.
inline double dice(const Mask& reference, const Mask& predicted) {
  require(reference.geometry.same_shape(predicted.geometry), ErrorKind::shape_mismatch, "dims",
          "masks differ in dims");
  std::size_t both = 0, t = 0, p = 0;
  for (std::size_t v = 0; v < reference.inside.size(); ++v) {
    const bool a = reference.inside[v] != 0;
    const bool b = predicted.inside[v] != 0;
    t += a;
    p += b;
    both += a && b;
  }
  if (t + p == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(t + p);
}

inline double dice(const LabelVolume& reference, const LabelVolume& predicted,
                   std::size_t class_id) {
  require(reference.geometry().same_shape(predicted.geometry()), ErrorKind::shape_mismatch,
          "dims", "volumes differ in dims");
  return dice(class_mask(reference, class_id), class_mask(predicted, class_id));
}

/// Mask voxels with at least one face neighbor outside the mask. The volume
/// border counts as outside. Face neighbors are 4 in-plane for rank 2, 6 for
/// rank 3.
inline Mask boundary_mask(const Mask& mask) {
  const Geometry& g = mask.geometry;
  Mask out{g, std::vector<std::uint8_t>(mask.inside.size(), 0)};
  const auto& e = g.extents;
  for (std::size_t z = 0; z < e[0]; ++z)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t x = 0; x < e[2]; ++x) {
        const std::size_t v = g.index(z, y, x);
        if (!mask.inside[v]) continue;
        bool edge = y == 0 || y + 1 == e[1] || x == 0 || x + 1 == e[2];
        if (g.rank == 3) edge = edge || z == 0 || z + 1 == e[0];
        if (!edge) {
          edge = !mask.inside[g.index(z, y - 1, x)] || !mask.inside[g.index(z, y + 1, x)] ||
                 !mask.inside[g.index(z, y, x - 1)] || !mask.inside[g.index(z, y, x + 1)];
          if (g.rank == 3)
            edge = edge || !mask.inside[g.index(z - 1, y, x)] || !mask.inside[g.index(z + 1, y, x)];
        }
        out.inside[v] = edge;
      }
  return out;
}

inline std::vector<Index3> boundary_voxels(const Mask& mask) {
  const Mask b = boundary_mask(mask);
  std::vector<Index3> out;
  for (std::size_t v = 0; v < b.inside.size(); ++v)
    if (b.inside[v]) out.push_back(b.geometry.coordinates(v));
  return out;
}

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line:
// out[p] = min_q f[q] + ((p - q) * spacing)^2, skipping infinite f[q].
inline void squared_edt_line(std::span<const double> f, std::span<double> out, double spacing,
                             std::vector<std::ptrdiff_t>& site, std::vector<double>& bound) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::ptrdiff_t>(f.size());
  const double w2 = spacing * spacing;
  site.resize(f.size());
  bound.resize(f.size() + 1);

  auto parabola_meet = [&](std::ptrdiff_t q, std::ptrdiff_t r) {
    const double qd = static_cast<double>(q), rd = static_cast<double>(r);
    return ((f[q] + w2 * qd * qd) - (f[r] + w2 * rd * rd)) / (2.0 * w2 * (qd - rd));
  };

  std::ptrdiff_t k = -1;
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      site[0] = q;
      bound[0] = -inf;
      bound[1] = inf;
      continue;
    }
    double s = parabola_meet(q, site[k]);
    while (s <= bound[k]) {
      --k;
      if (k < 0) break;
      s = parabola_meet(q, site[k]);
    }
    if (k < 0) {
      k = 0;
      site[0] = q;
      bound[0] = -inf;
      bound[1] = inf;
      continue;
    }
    ++k;
    site[k] = q;
    bound[k] = s;
    bound[k + 1] = inf;
  }

  if (k < 0) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }
  std::ptrdiff_t j = 0;
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    while (bound[j + 1] < static_cast<double>(p)) ++j;
    const double d = static_cast<double>(p - site[j]) * spacing;
    out[p] = f[site[j]] + d * d;
  }
}

}  // namespace detail

/// Squared Euclidean distance (mm^2) from every voxel center to the nearest
/// feature voxel center; +inf everywhere when there are no features.
inline std::vector<double> squared_distance_transform(const Mask& features, Execution exec = {}) {
  const Geometry& g = features.geometry;
  const auto& e = g.extents;
  std::vector<double> dist(features.inside.size());
  for (std::size_t v = 0; v < dist.size(); ++v)
    dist[v] = features.inside[v] ? 0.0 : std::numeric_limits<double>::infinity();

  const std::array<std::size_t, 3> stride{e[1] * e[2], e[2], 1};
  for (std::size_t axis = g.first_axis(); axis < 3; ++axis) {
    const std::size_t len = e[axis];
    if (len == 1) continue;
    const std::size_t a1 = axis == 0 ? 1 : 0;
    const std::size_t a2 = axis == 2 ? 1 : 2;
    const std::size_t lines = e[a1] * e[a2];
    parallel_for(lines, exec, [&](std::size_t begin, std::size_t end) {
      std::vector<double> in(len), out(len), bound;
      std::vector<std::ptrdiff_t> site;
      for (std::size_t l = begin; l < end; ++l) {
        const std::size_t base = (l / e[a2]) * stride[a1] + (l % e[a2]) * stride[a2];
        for (std::size_t i = 0; i < len; ++i) in[i] = dist[base + i * stride[axis]];
        detail::squared_edt_line(in, out, g.spacing[axis], site, bound);
        for (std::size_t i = 0; i < len; ++i) dist[base + i * stride[axis]] = out[i];
      }
    });
  }
  return dist;
}

/// Fraction of both boundaries lying within `tolerance_mm` of the other
/// boundary. 1 when both boundaries are empty, 0 when exactly one is.
inline double surface_dice(const Mask& reference, const Mask& predicted, double tolerance_mm,
                           Execution exec = {}) {
  require_same_grid(reference.geometry, predicted.geometry);
  require(tolerance_mm >= 0.0, ErrorKind::invalid_argument, "tolerance",
          "tolerance must be >= 0");
  const Mask edge_ref = boundary_mask(reference);
  const Mask edge_pred = boundary_mask(predicted);
  const std::size_t n_ref = edge_ref.count();
  const std::size_t n_pred = edge_pred.count();
  if (n_ref == 0 && n_pred == 0) return 1.0;
  if (n_ref == 0 || n_pred == 0) return 0.0;

  const double tol2 = tolerance_mm * tolerance_mm;
  auto covered = [tol2](const Mask& from, const std::vector<double>& dist_to_other) {
    std::size_t k = 0;
    for (std::size_t v = 0; v < from.inside.size(); ++v)
      if (from.inside[v] && dist_to_other[v] <= tol2) ++k;
    return k;
  };
  const std::size_t hits = covered(edge_ref, squared_distance_transform(edge_pred, exec)) +
                           covered(edge_pred, squared_distance_transform(edge_ref, exec));
  return static_cast<double>(hits) / static_cast<double>(n_ref + n_pred);
}

inline double surface_dice(const LabelVolume& reference, const LabelVolume& predicted,
                           std::size_t class_id, double tolerance_mm, Execution exec = {}) {
  require_same_grid(reference.geometry(), predicted.geometry());
  return surface_dice(class_mask(reference, class_id), class_mask(predicted, class_id),
                      tolerance_mm, exec);
}

inline constexpr double kDefaultSdToleranceMm = 2.0;

struct SegmentationRow {
  std::string name;  // class id, class name or merged region name
  double dsc = 0.0;
  double sd = 0.0;
};

struct SegmentationScores {
  std::vector<SegmentationRow> rows;
  double tolerance_mm = kDefaultSdToleranceMm;
};

/// Named class groups scored as single binary masks, e.g. {"WT": {1, 2, 4}}.
using RegionMap = std::map<std::string, std::vector<std::size_t>>;

/// One row per class (or per region when `regions` is non-empty). With
/// `composite`, appends a "composite" row holding the unweighted mean of the
/// foreground rows (class 0 excluded when scoring per class).
inline SegmentationScores evaluate_segmentation(const LabelVolume& reference,
                                                const LabelVolume& predicted, double tolerance_mm,
                                                const RegionMap& regions = {},
                                                bool composite = false, Execution exec = {}) {
  require_same_grid(reference.geometry(), predicted.geometry());
  require(reference.num_classes() == predicted.num_classes(), ErrorKind::shape_mismatch,
          "num_classes", "volumes differ in class count");
  SegmentationScores scores;
  scores.tolerance_mm = tolerance_mm;
  double dsc_sum = 0.0, sd_sum = 0.0;
  std::size_t foreground = 0;
  auto add = [&](std::string name, const Mask& t, const Mask& p, bool counts) {
    SegmentationRow row{std::move(name), dice(t, p), surface_dice(t, p, tolerance_mm, exec)};
    if (counts) {
      dsc_sum += row.dsc;
      sd_sum += row.sd;
      ++foreground;
    }
    scores.rows.push_back(std::move(row));
  };
  if (regions.empty()) {
    for (std::size_t c = 0; c < reference.num_classes(); ++c)
      add(std::to_string(c), class_mask(reference, c), class_mask(predicted, c), c != 0);
  } else {
    for (const auto& [name, ids] : regions)
      add(name, region_mask(reference, ids), region_mask(predicted, ids), true);
  }
  if (composite && foreground > 0)
    scores.rows.push_back({"composite", dsc_sum / double(foreground), sd_sum / double(foreground)});
  return scores;
}

}  // namespace svls
