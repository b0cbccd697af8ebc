#pragma once

// Volume container (.svlv), its JSON sidecar, and report writers.
//
// Container layout, all integers little-endian:
//   0   char[4]  "SVLV"
//   4   u16      version (1)
//   6   u8       dtype: 0 = u8 labels, 1 = f32 probabilities, 2 = f32 scores
//   7   u8       rank (2 or 3)
//   8   u32      dims[rank], slowest axis first
//   ..  u32      num_classes (dtype 1 and 2 only)
//   ..  payload  row-major values; float volumes lead with the class axis
//
// The sidecar `<path>.json` carries spacing, num_classes, class names, an
// optional sparse label-value table and provenance.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <unistd.h>
#include <variant>
#include <vector>

#include "json.hpp"
#include "svls/calib_metrics.hpp"
#include "svls/error.hpp"
#include "svls/loss.hpp"
#include "svls/seg_metrics.hpp"
#include "svls/volume.hpp"

namespace svls {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr char kToolVersion[] = "1.0.0";

enum class DType : std::uint8_t { labels = 0, probabilities = 1, scores = 2 };

struct Provenance {
  std::string method;
  std::optional<double> alpha;
  std::optional<double> sigma;
  std::vector<std::string> raters;
  std::string tool_version = kToolVersion;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SidecarMeta {
  std::vector<double> spacing;  // mm per axis
  std::size_t num_classes = 0;
  std::map<std::size_t, std::string> class_names;
  // Raw stored value of each dense class id, e.g. {0, 1, 2, 4}. Empty means
  // the payload already holds dense ids.
  std::vector<std::uint32_t> label_values;
  std::optional<Provenance> provenance;

  friend bool operator==(const SidecarMeta&, const SidecarMeta&) = default;
};

using AnyVolume = std::variant<LabelVolume, SoftLabelVolume, LogitVolume>;

struct VolumeFile {
  AnyVolume volume;
  SidecarMeta meta;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& volume_path) {
  auto p = volume_path;
  p += ".json";
  return p;
}

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// failed write never leaves a partial file behind.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp" + std::to_string(static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, path.string(), "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, path.string(), "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::io, path.string(), "cannot rename into " + path.string());
  }
}

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, path.string(), "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string encode_header(DType dtype, const Geometry& g, std::size_t classes) {
  std::string out = "SVLV";
  put_u16(out, kFormatVersion);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(g.rank));
  for (std::size_t d : g.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  if (dtype != DType::labels) put_u32(out, static_cast<std::uint32_t>(classes));
  return out;
}

template <typename T>
std::string encode_floats(DType dtype, const ClassGrid<T>& grid) {
  std::string out = encode_header(dtype, grid.geometry(), grid.num_classes());
  out.reserve(out.size() + 4 * grid.values().size());
  for (T value : grid.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
  return out;
}

inline nlohmann::ordered_json meta_to_json(const SidecarMeta& meta) {
  nlohmann::ordered_json j;
  j["spacing"] = meta.spacing;
  j["num_classes"] = meta.num_classes;
  if (!meta.class_names.empty()) {
    nlohmann::ordered_json names = nlohmann::ordered_json::object();
    for (const auto& [id, name] : meta.class_names) names[std::to_string(id)] = name;
    j["class_names"] = names;
  }
  if (!meta.label_values.empty()) j["label_values"] = meta.label_values;
  if (meta.provenance) {
    const auto& p = *meta.provenance;
    nlohmann::ordered_json pj;
    pj["method"] = p.method;
    if (p.alpha) pj["alpha"] = *p.alpha;
    if (p.sigma) pj["sigma"] = *p.sigma;
    if (!p.raters.empty()) pj["raters"] = p.raters;
    pj["tool_version"] = p.tool_version;
    j["provenance"] = pj;
  }
  return j;
}

inline SidecarMeta meta_from_json(const nlohmann::json& j, const std::string& where) {
  SidecarMeta meta;
  try {
    meta.spacing = j.at("spacing").get<std::vector<double>>();
    meta.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("class_names"))
      for (const auto& [key, value] : j.at("class_names").items())
        meta.class_names[std::stoul(key)] = value.get<std::string>();
    if (j.contains("label_values"))
      meta.label_values = j.at("label_values").get<std::vector<std::uint32_t>>();
    if (j.contains("provenance")) {
      const auto& pj = j.at("provenance");
      Provenance p;
      p.method = pj.value("method", "");
      if (pj.contains("alpha")) p.alpha = pj.at("alpha").get<double>();
      if (pj.contains("sigma")) p.sigma = pj.at("sigma").get<double>();
      if (pj.contains("raters")) p.raters = pj.at("raters").get<std::vector<std::string>>();
      p.tool_version = pj.value("tool_version", "");
      meta.provenance = p;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "sidecar", where + ": malformed sidecar: " + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::format, "class_names", where + ": malformed class id: " + e.what());
  }
  for (double s : meta.spacing)
    require(s > 0.0, ErrorKind::validation, "spacing", where + ": spacing must be positive");
  for (const auto& [id, name] : meta.class_names)
    require(id < meta.num_classes, ErrorKind::validation, "class_names",
            where + ": class map names an id outside [0, num_classes)");
  require(meta.label_values.empty() || meta.label_values.size() == meta.num_classes,
          ErrorKind::validation, "label_values",
          where + ": label_values must list one raw value per class");
  return meta;
}

}  // namespace detail

/// Sidecar for `geometry` and `num_classes`, without provenance.
inline SidecarMeta make_meta(const Geometry& geometry, std::size_t num_classes) {
  SidecarMeta meta;
  meta.spacing = geometry.spacing_mm();
  meta.num_classes = num_classes;
  return meta;
}

inline void write_sidecar(const SidecarMeta& meta, const std::filesystem::path& volume_path) {
  detail::atomic_write(sidecar_path(volume_path), detail::meta_to_json(meta).dump(2) + "\n");
}

inline std::optional<SidecarMeta> read_sidecar(const std::filesystem::path& volume_path) {
  const auto path = sidecar_path(volume_path);
  if (!std::filesystem::exists(path)) return std::nullopt;
  const std::string text = detail::read_all(path);
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::format, "sidecar", path.string() + ": not valid JSON");
  return detail::meta_from_json(j, path.string());
}

/// Raw container bytes for a volume. Label volumes with a `label_values`
/// table store the raw values.
inline std::string encode_volume(const AnyVolume& volume, const SidecarMeta& meta) {
  if (const auto* labels = std::get_if<LabelVolume>(&volume)) {
    std::string out = detail::encode_header(DType::labels, labels->geometry(), 0);
    out.reserve(out.size() + labels->size());
    for (Label l : labels->labels()) {
      const std::uint32_t raw = meta.label_values.empty() ? l : meta.label_values.at(l);
      require(raw <= 0xFF, ErrorKind::validation, "label_values", "raw label exceeds u8 range");
      out.push_back(static_cast<char>(raw));
    }
    return out;
  }
  if (const auto* probs = std::get_if<SoftLabelVolume>(&volume))
    return detail::encode_floats(DType::probabilities, *probs);
  return detail::encode_floats(DType::scores, std::get<LogitVolume>(volume));
}

inline const Geometry& geometry_of(const AnyVolume& v) {
  return std::visit([](const auto& x) -> const Geometry& { return x.geometry(); }, v);
}

inline std::size_t classes_of(const AnyVolume& v) {
  return std::visit([](const auto& x) { return x.num_classes(); }, v);
}

/// Writes the container and its sidecar. Spacing and class count in the
/// sidecar always follow the volume.
inline void write_volume(const AnyVolume& volume, const std::filesystem::path& path,
                         SidecarMeta meta = {}) {
  meta.spacing = geometry_of(volume).spacing_mm();
  meta.num_classes = classes_of(volume);
  detail::atomic_write(path, encode_volume(volume, meta));
  write_sidecar(meta, path);
}

/// Parses container bytes. Header problems raise ErrorKind::format naming the
/// field; invariant violations raise ErrorKind::validation.
inline AnyVolume decode_volume(const std::string& bytes, const SidecarMeta* meta,
                               const std::string& where = "volume") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  auto need = [&](std::size_t n, const char* field) {
    if (size < n) fail(ErrorKind::format, field, where + ": file truncated in " + field);
  };
  need(4, "magic");
  if (bytes.compare(0, 4, "SVLV") != 0)
    fail(ErrorKind::format, "magic", where + ": bad magic (expected SVLV)");
  need(8, "header");
  const std::uint16_t version = std::uint16_t(p[4]) | (std::uint16_t(p[5]) << 8);
  if (version != kFormatVersion)
    fail(ErrorKind::format, "version", where + ": unsupported version " + std::to_string(version));
  const std::uint8_t dtype_code = p[6];
  if (dtype_code > 2)
    fail(ErrorKind::format, "dtype", where + ": unknown dtype " + std::to_string(dtype_code));
  const auto dtype = static_cast<DType>(dtype_code);
  const int rank = p[7];
  if (rank != 2 && rank != 3)
    fail(ErrorKind::format, "rank", where + ": rank must be 2 or 3, got " + std::to_string(rank));

  std::size_t offset = 8;
  need(offset + 4 * static_cast<std::size_t>(rank), "dims");
  std::vector<std::size_t> dims(static_cast<std::size_t>(rank));
  std::size_t voxels = 1;
  for (auto& d : dims) {
    d = detail::get_u32(p + offset);
    offset += 4;
    if (d == 0) fail(ErrorKind::format, "dims", where + ": zero extent");
    voxels *= d;
  }
  std::size_t classes = 0;
  if (dtype != DType::labels) {
    need(offset + 4, "num_classes");
    classes = detail::get_u32(p + offset);
    offset += 4;
    if (classes < 2) fail(ErrorKind::format, "num_classes", where + ": need at least 2 classes");
  }

  const std::size_t expected = dtype == DType::labels ? voxels : 4 * voxels * classes;
  if (size - offset < expected)
    fail(ErrorKind::format, "payload", where + ": payload truncated (" +
                                           std::to_string(size - offset) + " of " +
                                           std::to_string(expected) + " bytes)");
  if (size - offset > expected)
    fail(ErrorKind::format, "payload", where + ": trailing bytes after payload");

  std::vector<double> spacing;
  if (meta) {
    if (!meta->spacing.empty() && meta->spacing.size() != dims.size())
      fail(ErrorKind::validation, "spacing", where + ": sidecar spacing does not match rank");
    spacing = meta->spacing;
    if (dtype != DType::labels && meta->num_classes != 0 && meta->num_classes != classes)
      fail(ErrorKind::validation, "num_classes",
           where + ": sidecar num_classes disagrees with the container");
  }
  const Geometry g = Geometry::from_dims(dims, spacing);

  if (dtype == DType::labels) {
    std::vector<Label> labels(p + offset, p + offset + voxels);
    std::size_t n = meta && meta->num_classes ? meta->num_classes : 0;
    if (meta && !meta->label_values.empty()) {
      std::array<int, 256> dense;
      dense.fill(-1);
      for (std::size_t i = 0; i < meta->label_values.size(); ++i)
        if (meta->label_values[i] <= 0xFF) dense[meta->label_values[i]] = static_cast<int>(i);
      for (std::size_t v = 0; v < voxels; ++v) {
        if (dense[labels[v]] < 0)
          fail(ErrorKind::validation, describe_voxel(g, v),
               where + ": " + describe_voxel(g, v) + " holds raw value " +
                   std::to_string(labels[v]) + " missing from label_values");
        labels[v] = static_cast<Label>(dense[labels[v]]);
      }
    }
    if (n == 0) {
      Label top = 0;
      for (Label l : labels) top = std::max(top, l);
      n = std::max<std::size_t>(2, std::size_t(top) + 1);
    }
    return LabelVolume(g, n, std::move(labels));
  }

  std::vector<float> values(voxels * classes);
  for (std::size_t i = 0; i < values.size(); ++i, offset += 4)
    values[i] = std::bit_cast<float>(detail::get_u32(p + offset));
  if (dtype == DType::probabilities) return SoftLabelVolume(g, classes, std::move(values));
  return LogitVolume(g, classes, std::move(values));
}

/// Reads a container and its sidecar (if present). A label volume without a
/// sidecar gets unit spacing and max(2, largest label + 1) classes.
inline VolumeFile read_volume_file(const std::filesystem::path& path) {
  const std::string bytes = detail::read_all(path);
  const auto meta = read_sidecar(path);
  AnyVolume volume = decode_volume(bytes, meta ? &*meta : nullptr, path.string());
  SidecarMeta resolved = meta.value_or(SidecarMeta{});
  resolved.spacing = geometry_of(volume).spacing_mm();
  resolved.num_classes = classes_of(volume);
  return {std::move(volume), std::move(resolved)};
}

inline AnyVolume read_volume(const std::filesystem::path& path) {
  return read_volume_file(path).volume;
}

inline LabelVolume read_labels(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* labels = std::get_if<LabelVolume>(&v)) return std::move(*labels);
  fail(ErrorKind::validation, "dtype", path.string() + ": expected a label volume");
}

/// Probability volume; a label volume is one-hot encoded.
inline SoftLabelVolume read_probabilities(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* probs = std::get_if<SoftLabelVolume>(&v)) return std::move(*probs);
  if (auto* labels = std::get_if<LabelVolume>(&v)) return one_hot_encode(*labels);
  fail(ErrorKind::validation, "dtype", path.string() + ": expected a probability volume");
}

/// Score volume; probability containers are accepted as raw scores too.
inline LogitVolume read_logits(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* logits = std::get_if<LogitVolume>(&v)) return std::move(*logits);
  if (auto* probs = std::get_if<SoftLabelVolume>(&v))
    return LogitVolume(probs->geometry(), probs->num_classes(),
                       std::vector<float>(probs->values().begin(), probs->values().end()));
  fail(ErrorKind::validation, "dtype", path.string() + ": expected a score volume");
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { json, csv };

/// Rounds to 6 significant digits, the precision of every report number.
inline double round6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return std::strtod(buf, nullptr);
}

inline std::string format6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline nlohmann::ordered_json to_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["ece"] = round6(r.ece);
  j["tace"] = round6(r.tace);
  j["num_bins"] = r.num_bins;
  j["tace_threshold"] = round6(r.tace_threshold);
  j["tace_ranges"] = r.tace_ranges;
  j["population"] = r.population;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json bj;
    bj["lower"] = round6(b.lower);
    bj["upper"] = round6(b.upper);
    bj["count"] = b.count;
    bj["mean_confidence"] = b.count ? nlohmann::ordered_json(round6(b.mean_confidence)) : nullptr;
    bj["accuracy"] = b.count ? nlohmann::ordered_json(round6(b.accuracy)) : nullptr;
    bins.push_back(bj);
  }
  j["bins"] = bins;
  return j;
}

inline std::string to_csv(const CalibrationReport& r) {
  std::string out = "lower,upper,count,mean_confidence,accuracy\n";
  for (const auto& b : r.bins) {
    out += format6(b.lower) + "," + format6(b.upper) + "," + std::to_string(b.count) + ",";
    if (b.count) out += format6(b.mean_confidence) + "," + format6(b.accuracy);
    else out += ",";
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json to_json(const SegmentationScores& s) {
  nlohmann::ordered_json j;
  j["tolerance_mm"] = round6(s.tolerance_mm);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : s.rows) {
    nlohmann::ordered_json rj;
    rj["class"] = row.name;
    rj["dsc"] = round6(row.dsc);
    rj["sd"] = round6(row.sd);
    rows.push_back(rj);
  }
  j["classes"] = rows;
  return j;
}

inline std::string to_csv(const SegmentationScores& s) {
  std::string out = "class,dsc,sd\n";
  for (const auto& row : s.rows)
    out += row.name + "," + format6(row.dsc) + "," + format6(row.sd) + "\n";
  return out;
}

inline nlohmann::ordered_json to_json(const LossReport& r, std::size_t voxels,
                                      Reduction reduction = Reduction::mean) {
  nlohmann::ordered_json j;
  j["cross_entropy"] = round6(r.total);
  j["reduction"] = reduction == Reduction::mean ? "mean" : "sum";
  j["units"] = "nats";
  j["voxels"] = voxels;
  return j;
}

inline std::string to_csv(const LossReport& r) {
  return "cross_entropy\n" + format6(r.total) + "\n";
}

template <typename Report>
void write_report(const Report& report, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::json)
    detail::atomic_write(path, to_json(report).dump(2) + "\n");
  else
    detail::atomic_write(path, to_csv(report));
}

inline void write_report(const LossReport& report, std::size_t voxels,
                         const std::filesystem::path& path, ReportFormat format,
                         Reduction reduction = Reduction::mean) {
  if (format == ReportFormat::json)
    detail::atomic_write(path, to_json(report, voxels, reduction).dump(2) + "\n");
  else
    detail::atomic_write(path, to_csv(report));
}

}  // namespace svls
