#pragma once

// 3^rank smoothing stencil: a Gaussian whose center tap is replaced by the
// sum of the surrounding taps, then normalized so the center equals one.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "svls/error.hpp"

namespace svls {

inline constexpr double kDefaultSigma = 1.0;

/// Stencil offset in {-1, 0, 1}^3. Rank-2 stencils keep dz == 0.
struct TapOffset {
  int dz = 0;
  int dy = 0;
  int dx = 0;

  int squared_norm() const { return dz * dz + dy * dy + dx * dx; }
  bool is_center() const { return dz == 0 && dy == 0 && dx == 0; }
};

/// Offsets in row-major order over the stencil (dx fastest).
inline std::vector<TapOffset> stencil_offsets(int rank) {
  require(rank == 2 || rank == 3, ErrorKind::invalid_argument, "rank",
          "kernel rank must be 2 or 3, got " + std::to_string(rank));
  std::vector<TapOffset> offsets;
  const int zlo = rank == 3 ? -1 : 0;
  const int zhi = rank == 3 ? 1 : 0;
  for (int dz = zlo; dz <= zhi; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) offsets.push_back({dz, dy, dx});
  return offsets;
}

/// Raw Gaussian taps exp(-|o|^2 / (2 sigma^2)) in stencil order. The
/// (2 pi sigma^2)^(-rank/2) prefactor is omitted: it cancels in svls_weights.
inline std::vector<double> gaussian_taps(int rank, double sigma = kDefaultSigma) {
  require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::invalid_argument, "sigma",
          "sigma must be finite and > 0");
  const auto offsets = stencil_offsets(rank);
  std::vector<double> taps;
  taps.reserve(offsets.size());
  for (const auto& o : offsets)
    taps.push_back(std::exp(-static_cast<double>(o.squared_norm()) / (2.0 * sigma * sigma)));
  return taps;
}

struct SvlsKernel {
  int rank = 3;
  double sigma = kDefaultSigma;
  std::vector<TapOffset> offsets;
  std::vector<double> taps;
  double total_weight = 0.0;

  std::size_t center_index() const { return taps.size() / 2; }
  double center() const { return taps[center_index()]; }
};

namespace detail {

// Rounds the inner shells to multiples of 2^-48 and sets the outer (corner)
// shell from the remainder, so the non-center taps sum to exactly 1 and any
// partial sum of taps is exact in double. Moves each tap by < 5e-15. Left
// alone when the corner tap would not stay positive (very small sigma).
inline void snap_to_dyadic(SvlsKernel& kernel) {
  constexpr double quantum = 0x1.0p-48;
  const int outer = kernel.rank;
  std::vector<double> taps = kernel.taps;
  double inner = 0.0;
  std::size_t corners = 0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const int norm = kernel.offsets[i].squared_norm();
    if (norm == 0) continue;
    if (norm == outer) {
      ++corners;
      continue;
    }
    taps[i] = std::round(taps[i] / quantum) * quantum;
    inner += taps[i];
  }
  const double corner = (1.0 - inner) / static_cast<double>(corners);
  if (!(corner > 0.0)) return;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (kernel.offsets[i].squared_norm() == outer) taps[i] = corner;
    if (taps[i] <= 0.0) return;
  }
  kernel.taps = std::move(taps);
}

}  // namespace detail

/// Center tap 1, every other tap raw / S where S is the sum of raw
/// non-center taps, so the non-center taps sum to 1 and the total is 2.
inline SvlsKernel svls_weights(int rank, double sigma = kDefaultSigma) {
  SvlsKernel kernel;
  kernel.rank = rank;
  kernel.sigma = sigma;
  kernel.offsets = stencil_offsets(rank);
  kernel.taps = gaussian_taps(rank, sigma);

  double surround = 0.0;
  for (std::size_t i = 0; i < kernel.taps.size(); ++i)
    if (!kernel.offsets[i].is_center()) surround += kernel.taps[i];

  for (std::size_t i = 0; i < kernel.taps.size(); ++i)
    kernel.taps[i] = kernel.offsets[i].is_center() ? 1.0 : kernel.taps[i] / surround;
  detail::snap_to_dyadic(kernel);

  kernel.total_weight = 0.0;
  for (double t : kernel.taps) kernel.total_weight += t;
  return kernel;
}

}  // namespace svls
