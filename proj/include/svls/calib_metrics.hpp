#pragma once

// Reliability diagrams, Expected Calibration Error (ECE) and Thresholded
// Adaptive Calibration Error (TACE) for per-voxel class probabilities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "svls/error.hpp"
#include "svls/volume.hpp"

namespace svls {

inline constexpr std::size_t kDefaultEceBins = 15;
inline constexpr double kDefaultTaceThreshold = 1e-3;
inline constexpr std::size_t kDefaultTaceRanges = 15;

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 when empty
  double accuracy = 0.0;         // 0 when empty
};

struct CalibrationReport {
  double ece = 0.0;
  double tace = 0.0;
  std::vector<ReliabilityBin> bins;
  double tace_threshold = kDefaultTaceThreshold;
  std::size_t tace_ranges = kDefaultTaceRanges;
  std::size_t num_bins = kDefaultEceBins;
  std::size_t population = 0;
};

/// Which voxels enter the calibration statistics.
enum class Population { all, foreground };

/// Equal-width bin over (0, 1] for a confidence, right-closed; 0 joins bin 0.
inline std::size_t confidence_bin(double confidence, std::size_t num_bins) {
  const double scaled = std::ceil(confidence * static_cast<double>(num_bins));
  if (scaled <= 1.0) return 0;
  return std::min(num_bins - 1, static_cast<std::size_t>(scaled) - 1);
}

namespace detail {

inline bool included(const LabelVolume& reference, std::size_t v, Population population) {
  return population == Population::all || reference[v] != 0;
}

template <typename T>
void require_matching(const LabelVolume& reference, const BasicSoftLabelVolume<T>& predicted) {
  require(reference.geometry().same_shape(predicted.geometry()), ErrorKind::shape_mismatch,
          "dims", "reference and prediction differ in dims");
  require(reference.num_classes() == predicted.num_classes(), ErrorKind::shape_mismatch,
          "num_classes", "reference and prediction differ in class count");
}

}  // namespace detail

/// Confidence = max class probability, correct = (argmax == reference).
template <typename T>
std::vector<ReliabilityBin> reliability(const LabelVolume& reference,
                                        const BasicSoftLabelVolume<T>& predicted,
                                        std::size_t num_bins = kDefaultEceBins,
                                        Population population = Population::all) {
  detail::require_matching(reference, predicted);
  require(num_bins >= 1, ErrorKind::invalid_argument, "num_bins", "need at least one bin");
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> correct(num_bins, 0), count(num_bins, 0);
  for (std::size_t v = 0; v < reference.size(); ++v) {
    if (!detail::included(reference, v, population)) continue;
    const std::size_t cls = argmax_class(predicted, v);
    const double confidence = predicted.at(cls, v);
    const std::size_t b = confidence_bin(confidence, num_bins);
    ++count[b];
    conf_sum[b] += confidence;
    correct[b] += cls == reference[v];
  }
  std::vector<ReliabilityBin> bins(num_bins);
  for (std::size_t b = 0; b < num_bins; ++b) {
    auto& bin = bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(num_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(num_bins);
    bin.count = count[b];
    if (count[b] > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
    }
  }
  return bins;
}

inline double ece(const std::vector<ReliabilityBin>& bins, std::size_t total_count) {
  require(total_count > 0, ErrorKind::invalid_argument, "total_count",
          "ECE needs a non-empty population");
  std::size_t seen = 0;
  double sum = 0.0;
  for (const auto& b : bins) {
    seen += b.count;
    sum += static_cast<double>(b.count) * std::abs(b.accuracy - b.mean_confidence);
  }
  require(seen == total_count, ErrorKind::invalid_argument, "total_count",
          "bin counts do not add up to the population");
  return sum / static_cast<double>(total_count);
}

inline double ece(const std::vector<ReliabilityBin>& bins) {
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  return ece(bins, total);
}

/// Per class: keep probabilities above `threshold`, sort, cut into
/// `num_ranges` equal-count ranges (tied probabilities never straddle a cut,
/// so identical values share one range), and average |frequency - mean
/// probability| over non-empty ranges. The result is the unweighted mean over
/// classes that kept any sample.
template <typename T>
double tace(const LabelVolume& reference, const BasicSoftLabelVolume<T>& predicted,
            double threshold = kDefaultTaceThreshold, std::size_t num_ranges = kDefaultTaceRanges,
            Population population = Population::all) {
  detail::require_matching(reference, predicted);
  require(threshold >= 0.0 && threshold < 1.0, ErrorKind::invalid_argument, "threshold",
          "threshold must lie in [0, 1)");
  require(num_ranges >= 1, ErrorKind::invalid_argument, "num_ranges", "need at least one range");

  struct Sample {
    double p;
    bool hit;
  };
  std::vector<Sample> samples;
  double class_sum = 0.0;
  std::size_t classes_used = 0;
  for (std::size_t c = 0; c < predicted.num_classes(); ++c) {
    samples.clear();
    const auto plane = predicted.plane(c);
    for (std::size_t v = 0; v < plane.size(); ++v) {
      if (!detail::included(reference, v, population)) continue;
      const double p = plane[v];
      if (p > threshold) samples.push_back({p, reference[v] == c});
    }
    if (samples.empty()) continue;
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.p < b.p; });

    const std::size_t n = samples.size();
    double range_sum = 0.0;
    std::size_t ranges = 0;
    std::size_t start = 0;
    while (start < n) {
      // Nominal end of the range holding `start`, extended over ties.
      const std::size_t r = start * num_ranges / n;
      std::size_t end = ((r + 1) * n + num_ranges - 1) / num_ranges;
      end = std::max(end, start + 1);
      while (end < n && samples[end].p == samples[end - 1].p) ++end;
      double p_sum = 0.0;
      std::size_t hits = 0;
      for (std::size_t i = start; i < end; ++i) {
        p_sum += samples[i].p;
        hits += samples[i].hit;
      }
      const double len = static_cast<double>(end - start);
      range_sum += std::abs(static_cast<double>(hits) / len - p_sum / len);
      ++ranges;
      start = end;
    }
    class_sum += range_sum / static_cast<double>(ranges);
    ++classes_used;
  }
  require(classes_used > 0, ErrorKind::validation, "threshold",
          "no probability exceeds the TACE threshold in any class");
  return class_sum / static_cast<double>(classes_used);
}

struct CalibrationOptions {
  std::size_t num_bins = kDefaultEceBins;
  double tace_threshold = kDefaultTaceThreshold;
  std::size_t tace_ranges = kDefaultTaceRanges;
  Population population = Population::all;
};

template <typename T>
CalibrationReport calibrate_report(const LabelVolume& reference,
                                   const BasicSoftLabelVolume<T>& predicted,
                                   const CalibrationOptions& options = {}) {
  CalibrationReport report;
  report.num_bins = options.num_bins;
  report.tace_threshold = options.tace_threshold;
  report.tace_ranges = options.tace_ranges;
  report.bins = reliability(reference, predicted, options.num_bins, options.population);
  for (const auto& b : report.bins) report.population += b.count;
  report.ece = ece(report.bins, report.population);
  report.tace = tace(reference, predicted, options.tace_threshold, options.tace_ranges,
                     options.population);
  return report;
}

}  // namespace svls
