// svls: soft-label generation and calibration evaluation from the command line.
//
//   svls kernel    --rank {2|3} [--sigma F] --format {json|text}
//   svls encode    --in PATH --method {onehot|ls|svls} [--alpha F] [--sigma F] --out PATH
//   svls fuse      --in PATH... --method {msvls|moh} [--sigma F] --out PATH
//   svls loss      --target PATH --pred PATH [--pred-kind {probs|logits}] --out report.json
//   svls evaluate  --ref PATH --pred PATH [...] --out DIR
//   svls phantom   --kind K --dims X,Y,Z [...] --out PATH
//
// Exit status: 0 success, 1 validation error, 2 I/O error. Failures print a
// single JSON object on stderr.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "log.hpp"
#include "svls/svls.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Options {
  unsigned threads = 0;

  struct {
    int rank = 3;
    double sigma = svls::kDefaultSigma;
    std::string format = "json";
    std::string out;
  } kernel;

  struct {
    std::string in, method, out;
    std::optional<double> alpha;
    double sigma = svls::kDefaultSigma;
  } encode;

  struct {
    std::vector<std::string> in;
    std::string method, out;
    double sigma = svls::kDefaultSigma;
  } fuse;

  struct {
    std::string target, pred, pred_kind = "probs", out;
  } loss;

  struct {
    std::string ref, pred, out, region_merge;
    double sd_tolerance = svls::kDefaultSdToleranceMm;
    std::size_t ece_bins = svls::kDefaultEceBins;
    double tace_threshold = svls::kDefaultTaceThreshold;
    std::size_t tace_ranges = svls::kDefaultTaceRanges;
    bool foreground_only = false;
    bool composite = false;
  } evaluate;

  struct {
    std::string kind, out, pred_out;
    std::vector<std::size_t> dims;
    std::vector<double> spacing, radii;
    std::size_t classes = 2;
    std::optional<std::size_t> raters;
    std::size_t jitter = 0;
    double strength = 0.0;
    double accuracy = 0.7;
    std::uint64_t seed = 0;
  } phantom;
};

svls::Execution exec_of(const Options& o) { return svls::Execution{o.threads}; }

void log_plan(const char* command, const ordered_json& params) {
  svls::log::info(std::string(command) + " " + params.dump());
}

bool is_dir(const std::string& p) { return fs::is_directory(p); }

/// Sorted .svlv files of a directory.
std::vector<fs::path> volumes_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".svlv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) svls::fail(svls::ErrorKind::io, dir.string(), dir.string() + " holds no .svlv volumes");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    svls::fail(svls::ErrorKind::io, dir.string(), "cannot create directory " + dir.string());
}

/// Runs `one(input, output)` for a file, or for every volume of a directory
/// with outputs mirrored by filename under `out`.
void batch(const std::string& in, const std::string& out,
           const std::function<void(const fs::path&, const fs::path&)>& one) {
  if (!is_dir(in)) return one(in, out);
  ensure_dir(out);
  for (const auto& p : volumes_in(in)) one(p, fs::path(out) / p.filename());
}

// ---------------------------------------------------------------------------

int run_kernel(const Options& o) {
  const auto& k_opts = o.kernel;
  log_plan("kernel", {{"rank", k_opts.rank}, {"sigma", k_opts.sigma}, {"format", k_opts.format}});
  const auto k = svls::svls_weights(k_opts.rank, k_opts.sigma);
  std::string text;
  if (k_opts.format == "json") {
    ordered_json j;
    j["rank"] = k.rank;
    j["sigma"] = k.sigma;
    j["center"] = k.center();
    j["total_weight"] = k.total_weight;
    auto taps = ordered_json::array();
    for (std::size_t i = 0; i < k.taps.size(); ++i) {
      const auto& off = k.offsets[i];
      ordered_json t;
      t["offset"] = k.rank == 3 ? std::vector<int>{off.dz, off.dy, off.dx}
                                : std::vector<int>{off.dy, off.dx};
      t["weight"] = k.taps[i];
      taps.push_back(t);
    }
    j["taps"] = taps;
    text = j.dump(2) + "\n";
  } else {
    char buf[64];
    std::snprintf(buf, sizeof buf, "rank %d sigma %g total %.9f\n", k.rank, k.sigma, k.total_weight);
    text = buf;
    for (std::size_t i = 0; i < k.taps.size(); ++i) {
      if (k.rank == 3 && i % 9 == 0) text += "slice dz=" + std::to_string(k.offsets[i].dz) + "\n";
      std::snprintf(buf, sizeof buf, "%10.6f", k.taps[i]);
      text += buf;
      text += (i % 3 == 2) ? "\n" : " ";
    }
  }
  if (k_opts.out.empty()) std::cout << text;
  else svls::detail::atomic_write(k_opts.out, text);
  return 0;
}

int run_encode(const Options& o) {
  const auto& e = o.encode;
  const auto method = svls::parse_smoothing_method(e.method);
  if (method != svls::SmoothingMethod::one_hot && method != svls::SmoothingMethod::ls &&
      method != svls::SmoothingMethod::svls)
    svls::fail(svls::ErrorKind::invalid_argument, "method", "encode supports onehot, ls and svls");
  if (method == svls::SmoothingMethod::ls && !e.alpha)
    svls::fail(svls::ErrorKind::invalid_argument, "alpha", "--method ls requires --alpha");
  if (method != svls::SmoothingMethod::ls && e.alpha)
    svls::fail(svls::ErrorKind::invalid_argument, "alpha", "--alpha applies to --method ls only");

  svls::SmoothingSpec spec{method, e.alpha.value_or(0.0), e.sigma};
  spec.validate();
  ordered_json plan{{"in", e.in}, {"method", e.method}, {"out", e.out}, {"threads", o.threads}};
  if (e.alpha) plan["alpha"] = *e.alpha;
  if (method == svls::SmoothingMethod::svls) plan["sigma"] = e.sigma;
  log_plan("encode", plan);

  batch(e.in, e.out, [&](const fs::path& in, const fs::path& out) {
    const auto file = svls::read_volume_file(in);
    const auto* labels = std::get_if<svls::LabelVolume>(&file.volume);
    if (!labels) svls::fail(svls::ErrorKind::validation, "dtype", in.string() + " is not a label volume");
    auto soft = svls::make_soft_labels(svls::RaterSet({*labels}), spec, exec_of(o));
    svls::SidecarMeta meta;
    meta.class_names = file.meta.class_names;
    svls::Provenance prov;
    prov.method = std::string(svls::to_string(method));
    if (method == svls::SmoothingMethod::ls) prov.alpha = spec.alpha;
    if (method == svls::SmoothingMethod::svls) prov.sigma = spec.sigma;
    prov.raters = {in.filename().string()};
    meta.provenance = prov;
    svls::write_volume(std::move(soft), out, meta);
    svls::log::debug("wrote " + out.string());
  });
  return 0;
}

int run_fuse(const Options& o) {
  const auto& f = o.fuse;
  const auto method = svls::parse_smoothing_method(f.method);
  if (method != svls::SmoothingMethod::msvls && method != svls::SmoothingMethod::moh)
    svls::fail(svls::ErrorKind::invalid_argument, "method", "fuse supports msvls and moh");
  std::vector<fs::path> inputs;
  for (const auto& p : f.in) {
    if (is_dir(p)) {
      const auto found = volumes_in(p);
      inputs.insert(inputs.end(), found.begin(), found.end());
    } else {
      inputs.emplace_back(p);
    }
  }
  ordered_json plan{{"in", f.in}, {"method", f.method}, {"out", f.out}, {"threads", o.threads}};
  if (method == svls::SmoothingMethod::msvls) plan["sigma"] = f.sigma;
  log_plan("fuse", plan);

  std::vector<svls::LabelVolume> raters;
  std::map<std::size_t, std::string> names;
  for (const auto& p : inputs) {
    auto file = svls::read_volume_file(p);
    if (names.empty()) names = file.meta.class_names;
    auto* labels = std::get_if<svls::LabelVolume>(&file.volume);
    if (!labels) svls::fail(svls::ErrorKind::validation, "dtype", p.string() + " is not a label volume");
    raters.push_back(std::move(*labels));
  }
  const svls::SmoothingSpec spec{method, 0.0, f.sigma};
  auto soft = svls::make_soft_labels(svls::RaterSet(std::move(raters)), spec, exec_of(o));
  svls::SidecarMeta meta;
  meta.class_names = names;
  svls::Provenance prov;
  prov.method = std::string(svls::to_string(method));
  if (method == svls::SmoothingMethod::msvls) prov.sigma = f.sigma;
  for (const auto& p : inputs) prov.raters.push_back(p.filename().string());
  meta.provenance = prov;
  svls::write_volume(std::move(soft), f.out, meta);
  return 0;
}

svls::ReportFormat format_for(const fs::path& p) {
  return p.extension() == ".csv" ? svls::ReportFormat::csv : svls::ReportFormat::json;
}

int run_loss(const Options& o) {
  const auto& l = o.loss;
  if (l.pred_kind != "probs" && l.pred_kind != "logits")
    svls::fail(svls::ErrorKind::invalid_argument, "pred-kind", "--pred-kind must be probs or logits");
  log_plan("loss", {{"target", l.target}, {"pred", l.pred}, {"pred_kind", l.pred_kind}, {"out", l.out}});

  auto one = [&](const fs::path& target_path, const fs::path& pred_path, const fs::path& out) {
    const auto target = svls::read_probabilities(target_path);
    const auto predicted = l.pred_kind == "logits" ? svls::softmax(svls::read_logits(pred_path))
                                                   : svls::read_probabilities(pred_path);
    const auto report = svls::cross_entropy(target, predicted);
    svls::write_report(report, target.voxel_count(), out, format_for(out));
  };
  if (!is_dir(l.target)) {
    one(l.target, l.pred, l.out);
    return 0;
  }
  ensure_dir(l.out);
  for (const auto& t : volumes_in(l.target)) {
    auto name = t.filename();
    one(t, fs::path(l.pred) / name, fs::path(l.out) / name.replace_extension(".json"));
  }
  return 0;
}

svls::RegionMap load_region_map(const std::string& path, const svls::SidecarMeta& ref_meta) {
  const std::string text = svls::detail::read_all(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    svls::fail(svls::ErrorKind::validation, "region-merge", path + " must be a JSON object of class-id lists");
  // Region files name raw label values; map them to dense ids when the
  // reference carries a sparse label table.
  svls::RegionMap regions;
  for (const auto& [name, ids] : j.items()) {
    if (!ids.is_array())
      svls::fail(svls::ErrorKind::validation, "region-merge", "region " + name + " is not a list");
    for (const auto& id : ids) {
      const auto raw = id.get<std::uint32_t>();
      std::size_t dense = raw;
      if (!ref_meta.label_values.empty()) {
        const auto it = std::find(ref_meta.label_values.begin(), ref_meta.label_values.end(), raw);
        if (it == ref_meta.label_values.end())
          svls::fail(svls::ErrorKind::validation, "region-merge",
                     "region " + name + " names unknown label " + std::to_string(raw));
        dense = static_cast<std::size_t>(it - ref_meta.label_values.begin());
      }
      regions[name].push_back(dense);
    }
  }
  return regions;
}

int run_evaluate(const Options& o) {
  const auto& e = o.evaluate;
  if (e.sd_tolerance < 0) svls::fail(svls::ErrorKind::invalid_argument, "sd-tolerance", "must be >= 0");
  if (e.ece_bins < 1) svls::fail(svls::ErrorKind::invalid_argument, "ece-bins", "must be >= 1");
  if (e.tace_ranges < 1) svls::fail(svls::ErrorKind::invalid_argument, "tace-ranges", "must be >= 1");
  if (e.tace_threshold < 0 || e.tace_threshold >= 1)
    svls::fail(svls::ErrorKind::invalid_argument, "tace-threshold", "must lie in [0, 1)");
  log_plan("evaluate", {{"ref", e.ref},
                        {"pred", e.pred},
                        {"sd_tolerance_mm", e.sd_tolerance},
                        {"ece_bins", e.ece_bins},
                        {"tace_threshold", e.tace_threshold},
                        {"tace_ranges", e.tace_ranges},
                        {"foreground_only", e.foreground_only},
                        {"region_merge", e.region_merge},
                        {"composite", e.composite},
                        {"out", e.out},
                        {"threads", o.threads}});

  auto one = [&](const fs::path& ref_path, const fs::path& pred_path, const fs::path& out_dir) {
    const auto ref_file = svls::read_volume_file(ref_path);
    const auto* ref = std::get_if<svls::LabelVolume>(&ref_file.volume);
    if (!ref) svls::fail(svls::ErrorKind::validation, "dtype", ref_path.string() + " is not a label volume");
    const auto pred = svls::read_probabilities(pred_path);
    svls::require_same_grid(ref->geometry(), pred.geometry());
    if (pred.num_classes() != ref->num_classes())
      svls::fail(svls::ErrorKind::shape_mismatch, "num_classes", "reference and prediction differ in class count");
    const auto hard = svls::argmax_labels(pred);
    const svls::RegionMap regions =
        e.region_merge.empty() ? svls::RegionMap{} : load_region_map(e.region_merge, ref_file.meta);

    auto scores = svls::evaluate_segmentation(*ref, hard, e.sd_tolerance, regions, e.composite, exec_of(o));
    if (regions.empty())
      for (auto& row : scores.rows) {
        if (row.name == "composite") continue;
        const auto it = ref_file.meta.class_names.find(std::stoul(row.name));
        if (it != ref_file.meta.class_names.end()) row.name = it->second;
      }
    svls::CalibrationOptions calib;
    calib.num_bins = e.ece_bins;
    calib.tace_threshold = e.tace_threshold;
    calib.tace_ranges = e.tace_ranges;
    calib.population = e.foreground_only ? svls::Population::foreground : svls::Population::all;
    const auto report = svls::calibrate_report(*ref, pred, calib);

    ensure_dir(out_dir);
    svls::write_report(scores, out_dir / "segmentation.json", svls::ReportFormat::json);
    svls::write_report(scores, out_dir / "segmentation.csv", svls::ReportFormat::csv);
    svls::write_report(report, out_dir / "calibration.json", svls::ReportFormat::json);
    svls::write_report(report, out_dir / "reliability.csv", svls::ReportFormat::csv);
  };
  if (!is_dir(e.ref)) {
    one(e.ref, e.pred, e.out);
    return 0;
  }
  for (const auto& r : volumes_in(e.ref))
    one(r, fs::path(e.pred) / r.filename(), fs::path(e.out) / r.stem());
  return 0;
}

int run_phantom(const Options& o) {
  const auto& p = o.phantom;
  svls::PhantomSpec spec;
  spec.kind = svls::parse_phantom_kind(p.kind);
  spec.dims = p.dims;
  spec.spacing = p.spacing;
  spec.num_classes = p.classes;
  spec.seed = p.seed;
  spec.strength = p.strength;
  spec.radii = p.radii;
  log_plan("phantom", {{"kind", p.kind},
                       {"dims", p.dims},
                       {"classes", p.classes},
                       {"raters", p.raters ? ordered_json(*p.raters) : ordered_json(nullptr)},
                       {"jitter", p.jitter},
                       {"strength", p.strength},
                       {"accuracy", p.accuracy},
                       {"seed", p.seed},
                       {"out", p.out}});

  if (p.raters) {
    const auto set = svls::generate_rater_set(spec, *p.raters, p.jitter);
    ensure_dir(p.out);
    for (std::size_t j = 0; j < set.size(); ++j) {
      char name[32];
      std::snprintf(name, sizeof name, "rater_%02zu.svlv", j);
      svls::write_volume(set[j], fs::path(p.out) / name);
    }
    return 0;
  }

  const auto labels = svls::generate_labels(spec);
  svls::write_volume(labels, p.out);
  if (spec.kind == svls::PhantomKind::miscalibrated_pred || !p.pred_out.empty()) {
    fs::path pred_out = p.pred_out;
    if (pred_out.empty()) {
      pred_out = fs::path(p.out);
      pred_out.replace_filename(pred_out.stem().string() + "_pred.svlv");
    }
    const auto pred = svls::generate_miscalibrated(labels, {p.strength, p.accuracy, std::nullopt, p.seed});
    svls::SidecarMeta meta;
    svls::Provenance prov;
    prov.method = "miscalibrated";
    meta.provenance = prov;
    svls::write_volume(pred, pred_out, meta);
  }
  return 0;
}

void print_error(const char* kind, const std::string& field, const std::string& message) {
  ordered_json j{{"error", kind}, {"field", field}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially varying label smoothing and calibration metrics for label volumes"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file whose keys mirror the flags (flags take precedence)");
  Options o;
  app.add_option("--threads", o.threads, "Worker threads (0 = all available cores)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  auto* kernel = app.add_subcommand("kernel", "Print the SVLS kernel taps");
  kernel->add_option("--rank", o.kernel.rank, "Kernel rank")->required()->check(CLI::IsMember({2, 3}));
  kernel->add_option("--sigma", o.kernel.sigma, "Gaussian sigma in voxels")->capture_default_str();
  kernel->add_option("--format", o.kernel.format, "Output format")
      ->capture_default_str()
      ->check(CLI::IsMember({"json", "text"}));
  kernel->add_option("--out", o.kernel.out, "Output file (default: stdout)");

  auto* encode = app.add_subcommand("encode", "Turn a label volume into soft labels");
  encode->add_option("--in", o.encode.in, "Label volume or directory of volumes")->required();
  encode->add_option("--method", o.encode.method, "Soft-label method")
      ->required()
      ->check(CLI::IsMember({"onehot", "ls", "svls"}));
  auto* alpha = encode->add_option("--alpha", o.encode.alpha, "LS weight in [0,1] (required for ls, no default)");
  auto* sigma = encode->add_option("--sigma", o.encode.sigma, "SVLS Gaussian sigma in voxels")->capture_default_str();
  alpha->excludes(sigma);
  encode->add_option("--out", o.encode.out, "Output volume or directory")->required();

  auto* fuse = app.add_subcommand("fuse", "Fuse several annotations into soft labels");
  fuse->add_option("--in", o.fuse.in, "Rater volumes or directories")->required()->expected(1, -1);
  fuse->add_option("--method", o.fuse.method, "Fusion method")
      ->required()
      ->check(CLI::IsMember({"msvls", "moh"}));
  fuse->add_option("--sigma", o.fuse.sigma, "SVLS Gaussian sigma in voxels")->capture_default_str();
  fuse->add_option("--out", o.fuse.out, "Output volume")->required();

  auto* loss = app.add_subcommand("loss", "Cross-entropy of predictions against a soft target");
  loss->add_option("--target", o.loss.target, "Target volume (labels are one-hot encoded)")->required();
  loss->add_option("--pred", o.loss.pred, "Prediction volume")->required();
  loss->add_option("--pred-kind", o.loss.pred_kind, "Prediction contents")
      ->capture_default_str()
      ->check(CLI::IsMember({"probs", "logits"}));
  loss->add_option("--out", o.loss.out, "Report path (.json or .csv)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Segmentation and calibration metrics");
  evaluate->add_option("--ref", o.evaluate.ref, "Reference label volume or directory")->required();
  evaluate->add_option("--pred", o.evaluate.pred, "Predicted probabilities or directory")->required();
  evaluate->add_option("--sd-tolerance", o.evaluate.sd_tolerance, "Surface Dice tolerance (mm)")->capture_default_str();
  evaluate->add_option("--ece-bins", o.evaluate.ece_bins, "Equal-width ECE bins")->capture_default_str();
  evaluate->add_option("--tace-threshold", o.evaluate.tace_threshold, "TACE probability floor")->capture_default_str();
  evaluate->add_option("--tace-ranges", o.evaluate.tace_ranges, "Adaptive TACE ranges per class")->capture_default_str();
  evaluate->add_flag("--foreground-only", o.evaluate.foreground_only,
                     "Calibrate over voxels whose reference is not class 0");
  evaluate->add_option("--region-merge", o.evaluate.region_merge,
                       "JSON file mapping region names to lists of label values");
  evaluate->add_flag("--composite", o.evaluate.composite, "Append the unweighted mean of foreground rows");
  evaluate->add_option("--out", o.evaluate.out, "Output directory")->required();

  auto* phantom = app.add_subcommand("phantom", "Generate synthetic test volumes");
  phantom->add_option("--kind", o.phantom.kind, "Phantom kind")
      ->required()
      ->check(CLI::IsMember({"homogeneous", "isolated_center", "straight_boundary", "nested_spheres",
                             "fig3_multirater", "miscalibrated_pred"}));
  phantom->add_option("--dims", o.phantom.dims, "Extents, slowest axis first (2 or 3 values)")
      ->required()
      ->delimiter(',');
  phantom->add_option("--spacing", o.phantom.spacing, "Spacing in mm per axis")->delimiter(',');
  phantom->add_option("--classes", o.phantom.classes, "Number of classes")->capture_default_str();
  auto* raters = phantom->add_option("--raters", o.phantom.raters, "Write this many jittered raters into --out (a directory)");
  phantom->add_option("--jitter", o.phantom.jitter, "Maximum rater shift in voxels")->capture_default_str()->needs(raters);
  phantom->add_option("--strength", o.phantom.strength, "Confidence inflation for predictions")->capture_default_str();
  phantom->add_option("--accuracy", o.phantom.accuracy, "Prediction accuracy for miscalibrated_pred")->capture_default_str();
  phantom->add_option("--radii", o.phantom.radii, "nested_spheres radii in voxels, ascending")->delimiter(',');
  phantom->add_option("--seed", o.phantom.seed, "Random seed")->capture_default_str();
  phantom->add_option("--out", o.phantom.out, "Output volume (or directory with --raters)")->required();
  phantom->add_option("--pred-out", o.phantom.pred_out, "Prediction output (default: <out>_pred.svlv)")
      ->excludes(raters);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", "", e.what());
    return kExitValidation;
  }

  try {
    if (kernel->parsed()) return run_kernel(o);
    if (encode->parsed()) return run_encode(o);
    if (fuse->parsed()) return run_fuse(o);
    if (loss->parsed()) return run_loss(o);
    if (evaluate->parsed()) return run_evaluate(o);
    if (phantom->parsed()) return run_phantom(o);
  } catch (const svls::Error& e) {
    const bool io = e.kind() == svls::ErrorKind::io || e.kind() == svls::ErrorKind::format;
    print_error(svls::to_string(e.kind()), e.field(), e.what());
    return io ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    print_error("io", e.path1().string(), e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    print_error("validation", "", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
