// fimap: command-line front end over the fimap library.
//
//   fimap synth            render a synthetic stack with ground truth
//   fimap segment          mask + labels + region table for one stack
//   fimap extract          per-particle HSV fingerprints
//   fimap build-library    polymer signatures from labeled fingerprints
//   fimap classify         Mahalanobis nearest-signature assignment
//   fimap evaluate         confusion counts, scores, area IoU table
//   fimap distance-matrix  class-to-class distances and confusable pairs
//   fimap calibrate-ev     exposure arithmetic for camera settings
//
// Every subcommand computes all outputs before writing any of them and
// leaves a run_log.json next to its outputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fimap/classify.hpp"
#include "fimap/error.hpp"
#include "fimap/fingerprint.hpp"
#include "fimap/image.hpp"
#include "fimap/ingest.hpp"
#include "fimap/metrics.hpp"
#include "fimap/report.hpp"
#include "fimap/segment.hpp"
#include "fimap/synth.hpp"

#ifndef FIMAP_VERSION
#define FIMAP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    fs::path output_dir = ".";
    bool no_register = false;
    int k = 3;
    int min_area = 9;
    double tau = fimap::kDefaultTau;
    std::string reference = "median";
    int max_shift = fimap::kDefaultMaxShiftPx;
};

// Outputs are staged in memory and flushed together once the command has
// succeeded.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

    fs::path path(const std::string& name) const { return dir_ / name; }
    void add(std::function<void()> writer) { writers_.push_back(std::move(writer)); }
    void csv(const std::string& name, fimap::CsvTable table) {
        add([p = path(name), t = std::move(table)] { fimap::write_csv(t, p); });
    }
    void text(const std::string& name, std::string body) {
        add([p = path(name), b = std::move(body)] {
            std::ofstream out(p);
            if (!out) throw fimap::Error("cannot write " + p.string());
            out << b;
        });
    }
    void commit() {
        fs::create_directories(dir_);
        for (auto& w : writers_) w();
    }

private:
    fs::path dir_;
    std::vector<std::function<void()>> writers_;
};

json segmentation_json(const fimap::SegmentationConfig& c) {
    return {{"k", c.k},
            {"max_iterations", c.max_iterations},
            {"convergence_tol", c.convergence_tol},
            {"rng_seed", c.rng_seed},
            {"min_area_px", c.min_area_px},
            {"feature_space", std::string(fimap::to_string(c.feature_space))},
            {"fill_holes", c.fill_holes},
            {"selection", std::string(fimap::to_string(c.selection))},
            {"max_sample_pixels", c.max_sample_pixels}};
}

json run_log(const std::string& command, const Globals& g, json inputs, json config,
             const std::vector<std::string>& warnings) {
    return {{"command", command},
            {"fimap_version", FIMAP_VERSION},
            {"seed", g.seed},
            {"inputs", std::move(inputs)},
            {"config", std::move(config)},
            {"warnings", warnings}};
}

void add_log(OutputSet& out, const json& log) { out.text("run_log.json", log.dump(2) + "\n"); }

void warn_all(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

fimap::CsvTable offsets_table(const fimap::StackManifest& m, const fimap::ImageStack& s) {
    fimap::CsvTable t;
    t.header = {"condition_index", "dx", "dy"};
    for (std::size_t i = 0; i < m.conditions.size(); ++i) {
        t.rows.push_back({std::to_string(m.conditions[i].index), std::to_string(s.registration_offsets[i].dx),
                          std::to_string(s.registration_offsets[i].dy)});
    }
    return t;
}

std::vector<fimap::Offset> offsets_from_table(const fimap::CsvTable& t, const fimap::StackManifest& m) {
    const auto ci = t.column("condition_index"), cx = t.column("dx"), cy = t.column("dy");
    std::vector<fimap::Offset> out(m.condition_count());
    std::vector<bool> seen(m.condition_count(), false);
    for (const auto& row : t.rows) {
        const std::size_t pos = m.position_of(std::stoi(row[ci]));
        out[pos] = {std::stoi(row[cx]), std::stoi(row[cy])};
        seen[pos] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw fimap::Error("registration table lacks condition " + std::to_string(m.conditions[i].index));
        }
    }
    return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    fs::path scene_path;
    fs::path classes_path;
    int class_count = 4;
    int per_class = 2;
    int width = 256;
    int height = 256;
    double r_min = 8.0;
    double r_max = 16.0;
    double sigma_h = 0.0;
    double sigma_s = 0.0;
    double sigma_v = 0.0;
    double vignette = 0.0;
};

void cmd_synth(const Globals& g, const SynthArgs& a) {
    fimap::StackManifest manifest = fimap::synthetic_manifest(g.output_dir);
    std::vector<fimap::SynthClassSpec> classes;
    if (!a.classes_path.empty()) {
        classes = fimap::load_class_specs(a.classes_path);
    } else {
        classes = fimap::spaced_hue_classes(a.class_count, manifest, {a.sigma_h, a.sigma_s, a.sigma_v}, g.seed);
    }
    fimap::SynthSceneSpec scene;
    if (!a.scene_path.empty()) {
        scene = fimap::load_scene_spec(a.scene_path);
    } else {
        scene = fimap::random_disk_scene(a.width, a.height, classes, a.per_class, a.r_min, a.r_max, g.seed);
        scene.vignette_strength = a.vignette;
    }
    const auto result = fimap::generate_stack(scene, classes, manifest);

    OutputSet out(g.output_dir);
    for (std::size_t i = 0; i < manifest.conditions.size(); ++i) {
        out.add([p = manifest.conditions[i].image_path, &img = result.stack.images[i]] {
            fimap::write_rgb_image(p, img);
        });
    }
    out.add([&] { fimap::save_manifest(manifest, out.path("manifest.json")); });
    out.add([&] { fimap::save_scene_spec(scene, out.path("scene.json")); });
    out.add([&] { fimap::save_class_specs(classes, out.path("classes.json")); });
    out.add([&] {
        fimap::write_gray16(out.path("truth_labels.png"), result.truth.width, result.truth.height,
                            result.truth.to_gray16());
        const auto fg = result.truth.foreground();
        fimap::write_gray8(out.path("truth_mask.png"), fg.width, fg.height, fg.to_gray8());
    });
    out.csv("truth.csv", fimap::truth_table(result.truth, result.truth_labels));
    add_log(out, run_log("synth", g,
                         {{"scene", a.scene_path.string()}, {"classes", a.classes_path.string()}},
                         {{"width", scene.width},
                          {"height", scene.height},
                          {"particles", scene.particles.size()},
                          {"classes", classes.size()},
                          {"vignette_strength", scene.vignette_strength}},
                         {}));
    out.commit();
    std::cout << "wrote " << manifest.condition_count() << " conditions, " << result.truth.regions.size()
              << " particles to " << g.output_dir.string() << '\n';
}

// ---------------------------------------------------------------- segment

struct SegmentArgs {
    fs::path manifest;
    std::string selection = "luminance_split";
    std::string feature_space = "ycbcr";
    std::string preset;
    bool no_fill = false;
};

fimap::SegmentationConfig segmentation_config(const Globals& g, const SegmentArgs& a) {
    fimap::SegmentationConfig cfg;
    if (a.preset == "turbid") cfg = fimap::SegmentationConfig::turbid();
    else if (a.preset == "small") cfg = fimap::SegmentationConfig::small_particles();
    else if (!a.preset.empty()) throw fimap::Error("unknown preset '" + a.preset + "'");
    // Explicit flags win over the preset defaults.
    if (a.preset.empty() || g.k != 3) cfg.k = g.k;
    if (a.preset.empty() || g.min_area != 9) cfg.min_area_px = g.min_area;
    cfg.rng_seed = g.seed;
    cfg.selection = fimap::parse_cluster_selection(a.selection);
    cfg.feature_space = fimap::parse_feature_space(a.feature_space);
    cfg.fill_holes = !a.no_fill;
    cfg.validate();
    return cfg;
}

fimap::ImageStack load_registered(const fimap::StackManifest& manifest, const Globals& g) {
    auto stack = fimap::load_stack(manifest);
    if (g.no_register) return stack;
    auto registered = fimap::register_stack(stack, manifest, g.max_shift);
    return registered;
}

void cmd_segment(const Globals& g, const SegmentArgs& a) {
    const auto manifest = fimap::load_manifest(a.manifest);
    const auto cfg = segmentation_config(g, a);
    const auto stack = load_registered(manifest, g);
    const std::size_t mpos = manifest.mask_position();
    const fimap::RgbImage* high = stack.high_ev[mpos] ? &*stack.high_ev[mpos] : nullptr;
    const auto mask = fimap::build_mask(stack.images[mpos], cfg, high);
    const auto labels = fimap::label_regions(mask, cfg.min_area_px);

    std::vector<std::string> warnings = manifest.warnings;
    warnings.insert(warnings.end(), stack.warnings.begin(), stack.warnings.end());
    warn_all(warnings);

    OutputSet out(g.output_dir);
    out.add([&] {
        fimap::write_gray8(out.path("mask.png"), mask.width, mask.height, mask.to_gray8());
        fimap::write_gray16(out.path("labels.png"), labels.width, labels.height, labels.to_gray16());
    });
    out.csv("regions.csv", fimap::region_table(labels, manifest.pixel_scale_um_per_px));
    out.csv("registration.csv", offsets_table(manifest, stack));
    add_log(out, run_log("segment", g, {{"manifest", a.manifest.string()}},
                         {{"segmentation", segmentation_json(cfg)},
                          {"register", !g.no_register},
                          {"max_shift_px", g.max_shift},
                          {"mask_condition_index", manifest.mask_condition_index},
                          {"origin", {stack.origin_x, stack.origin_y}},
                          {"size", {stack.width, stack.height}}},
                         warnings));
    out.commit();
    std::cout << labels.regions.size() << " particles, " << mask.count() << " mask pixels\n";
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
    fs::path manifest;
    fs::path labels;
    fs::path registration;
    std::string encoding = "chroma";
    bool pixel_covariance = false;
};

void cmd_extract(const Globals& g, const ExtractArgs& a) {
    const auto manifest = fimap::load_manifest(a.manifest);
    const auto raster = fimap::read_gray16(a.labels);
    const auto labels = fimap::label_map_from_raster(raster.width, raster.height, raster.data);

    fs::path reg_path = a.registration;
    if (reg_path.empty() && fs::exists(a.labels.parent_path() / "registration.csv")) {
        reg_path = a.labels.parent_path() / "registration.csv";
    }
    auto stack = fimap::load_stack(manifest);
    std::string registration_source = "none";
    if (!reg_path.empty()) {
        const auto offsets = offsets_from_table(fimap::read_csv(reg_path), manifest);
        stack = fimap::apply_offsets(stack, offsets);
        registration_source = reg_path.string();
    } else if (!g.no_register) {
        stack = fimap::register_stack(stack, manifest, g.max_shift);
        registration_source = "estimated";
    }
    if (stack.width != labels.width || stack.height != labels.height) {
        throw fimap::Error("label raster is " + std::to_string(labels.width) + "x" + std::to_string(labels.height) +
                           " but the registered stack is " + std::to_string(stack.width) + "x" +
                           std::to_string(stack.height));
    }

    fimap::ExtractOptions opts;
    opts.encoding = fimap::parse_feature_encoding(a.encoding);
    opts.pixel_covariance = a.pixel_covariance;
    fimap::FingerprintSet set;
    set.manifest_digest = fimap::manifest_digest(manifest);
    for (const auto& c : manifest.conditions) set.condition_indices.push_back(c.index);
    set.fingerprints = fimap::extract_fingerprints(stack, labels, manifest, opts);

    std::vector<std::string> warnings = manifest.warnings;
    warnings.insert(warnings.end(), stack.warnings.begin(), stack.warnings.end());
    warn_all(warnings);

    OutputSet out(g.output_dir);
    out.add([&] { fimap::save_fingerprints(set, out.path("fingerprints.json")); });
    add_log(out, run_log("extract", g,
                         {{"manifest", a.manifest.string()}, {"labels", a.labels.string()},
                          {"registration", registration_source}},
                         {{"encoding", a.encoding}, {"pixel_covariance", a.pixel_covariance}}, warnings));
    out.commit();
    std::cout << set.fingerprints.size() << " fingerprints\n";
}

// ---------------------------------------------------------------- build-library

struct BuildArgs {
    std::vector<std::string> train;  // CLASS=fingerprints.json[:id,id,...]
    fs::path fingerprints;
    fs::path regions;
    fs::path truth;
    double match_radius = 50.0;
    std::string covariance = "samples";
    double lambda_rel = 1e-3;
};

void cmd_build_library(const Globals& g, const BuildArgs& a) {
    fimap::TrainingSamples samples;
    std::string digest;
    json inputs = json::array();
    auto take_digest = [&](const fimap::FingerprintSet& set) {
        if (digest.empty()) digest = set.manifest_digest;
        else if (digest != set.manifest_digest) throw fimap::Error("training fingerprints come from different condition sets");
    };

    for (const auto& spec : a.train) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw fimap::Error("--train expects CLASS=FILE[:ID,...], got '" + spec + "'");
        const std::string cls = spec.substr(0, eq);
        std::string file = spec.substr(eq + 1);
        std::vector<int> ids;
        if (const auto colon = file.rfind(':'); colon != std::string::npos && colon > 1) {
            std::stringstream list(file.substr(colon + 1));
            for (std::string tok; std::getline(list, tok, ',');) ids.push_back(std::stoi(tok));
            file = file.substr(0, colon);
        }
        const auto set = fimap::load_fingerprints(file);
        take_digest(set);
        for (const auto& fp : set.fingerprints) {
            if (ids.empty() || std::find(ids.begin(), ids.end(), fp.region_id) != ids.end()) samples[cls].push_back(fp);
        }
        inputs.push_back(spec);
    }

    if (!a.fingerprints.empty()) {
        if (a.regions.empty() || a.truth.empty()) {
            throw fimap::Error("--fingerprints needs --regions and --truth to label particles");
        }
        const auto set = fimap::load_fingerprints(a.fingerprints);
        take_digest(set);
        const auto regions = fimap::read_csv(a.regions);
        const auto truth = fimap::labeled_particles_from_table(fimap::read_csv(a.truth));
        std::map<int, fimap::LabeledParticle> by_id;
        const auto rid = regions.column("region_id"), cx = regions.column("centroid_x"),
                   cy = regions.column("centroid_y");
        for (const auto& row : regions.rows) {
            by_id[std::stoi(row[rid])] = {std::stod(row[cx]), std::stod(row[cy]), {}};
        }
        for (const auto& fp : set.fingerprints) {
            const auto it = by_id.find(fp.region_id);
            if (it == by_id.end()) throw fimap::Error("region " + std::to_string(fp.region_id) + " not in region table");
            const fimap::LabeledParticle* best = nullptr;
            double best_d = a.match_radius;
            for (const auto& t : truth) {
                const double d = std::hypot(t.centroid_x - it->second.centroid_x, t.centroid_y - it->second.centroid_y);
                if (d <= best_d) {
                    best_d = d;
                    best = &t;
                }
            }
            if (best) samples[best->label].push_back(fp);
        }
        inputs.push_back({{"fingerprints", a.fingerprints.string()}, {"regions", a.regions.string()},
                          {"truth", a.truth.string()}});
    }
    if (samples.empty()) throw fimap::Error("no training fingerprints; pass --train or --fingerprints");

    fimap::LibraryOptions opts;
    opts.lambda_rel = a.lambda_rel;
    opts.covariance = fimap::parse_covariance_source(a.covariance);
    const auto lib = fimap::build_library(samples, opts, digest);

    OutputSet out(g.output_dir);
    out.add([&] { fimap::save_library(lib, out.path("library.json")); });
    json counts;
    for (const auto& s : lib.signatures) counts[s.class_name] = s.sample_count;
    add_log(out, run_log("build-library", g, inputs,
                         {{"covariance", a.covariance}, {"lambda_rel", a.lambda_rel}, {"sample_counts", counts}}, {}));
    out.commit();
    std::cout << lib.signatures.size() << " classes, dimension " << lib.dimension() << '\n';
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    fs::path library;
    fs::path fingerprints;
    fs::path labels;
};

void cmd_classify(const Globals& g, const ClassifyArgs& a) {
    if (!(g.tau > 0.0)) throw fimap::Error("--tau must be positive");
    const auto lib = fimap::load_library(a.library);
    const auto set = fimap::load_fingerprints(a.fingerprints);
    const auto raster = fimap::read_gray16(a.labels);
    const auto labels = fimap::label_map_from_raster(raster.width, raster.height, raster.data);

    std::vector<std::string> warnings;
    if (auto w = fimap::digest_warning(lib, set.manifest_digest)) warnings.push_back(*w);
    warn_all(warnings);

    std::vector<fimap::ClassificationResult> results;
    for (const auto& fp : set.fingerprints) results.push_back(fimap::classify_particle(fp, lib, g.tau));

    OutputSet out(g.output_dir);
    out.csv("classifications.csv", fimap::classification_table(results, labels));
    add_log(out, run_log("classify", g,
                         {{"library", a.library.string()}, {"fingerprints", a.fingerprints.string()},
                          {"labels", a.labels.string()}},
                         {{"tau", g.tau}}, warnings));
    out.commit();
    std::map<std::string, int> tally;
    for (const auto& r : results) ++tally[r.assigned_class];
    for (const auto& [cls, n] : tally) std::cout << cls << ' ' << n << '\n';
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    fs::path predicted;
    fs::path truth;
    fs::path areas;
    double match_radius = 50.0;
};

std::string score_text(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

void cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
    if (a.truth.empty() && a.areas.empty()) throw fimap::Error("evaluate needs --truth (with --predicted) or --areas");
    const auto default_ref = fimap::parse_reference_method(g.reference);

    std::ostringstream report;
    OutputSet out(g.output_dir);
    fimap::CsvTable summary;
    summary.header = {"metric", "value"};

    if (!a.truth.empty()) {
        if (a.predicted.empty()) throw fimap::Error("--truth needs --predicted");
        const auto pred = fimap::labeled_particles_from_table(fimap::read_csv(a.predicted));
        const auto truth = fimap::labeled_particles_from_table(fimap::read_csv(a.truth));
        fimap::MatchOptions mo;
        mo.match_radius_px = a.match_radius;
        const auto c = fimap::detection_confusion(pred, truth, mo);
        const auto s = fimap::scores(c);
        report << "detection (greedy centroid matching, radius " << a.match_radius << " px)\n"
               << "  predicted " << pred.size() << ", truth " << truth.size() << '\n'
               << "  TP " << c.tp << "  FP " << c.fp << "  TN " << c.tn << "  FN " << c.fn << '\n'
               << "  accuracy  (TP+TN)/(TP+TN+FP+FN) " << score_text(s.accuracy) << '\n'
               << "  precision TP/(TP+FP)            " << score_text(s.precision) << '\n'
               << "  recall    TP/(TP+FN)            " << score_text(s.recall) << '\n'
               << "  F1                              " << score_text(s.f1) << '\n'
               << "  IoU       TP/(TP+FP+FN)         " << score_text(s.iou) << '\n';
        for (auto [name, v] : {std::pair{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}) {
            summary.rows.push_back({name, std::to_string(v)});
        }
        for (auto [name, v] : {std::pair{"accuracy", s.accuracy}, {"precision", s.precision}, {"recall", s.recall},
                               {"f1", s.f1}, {"iou", s.iou}}) {
            summary.rows.push_back({name, v ? fimap::format_double(*v) : std::string{}});
        }
    }

    if (!a.areas.empty()) {
        const auto table = fimap::read_csv(a.areas);
        auto series = fimap::area_series_from_table(table);
        if (!table.has_column("reference")) {
            for (auto& s : series) s.reference_method = default_ref;
        }
        std::vector<fimap::AreaIouRow> rows;
        for (const auto& s : series) rows.push_back(fimap::evaluate_area_series(s));
        double mean = 0.0;
        report << "\nmask area vs reference area\n";
        char line[160];
        std::snprintf(line, sizeof line, "  %-12s %-7s %14s %14s %7s %9s\n", "particle", "ref", "mask_px", "ref_px",
                      "IoU", "ROI%");
        report << line;
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "  %-12s %-7s %14.2f %14.2f %7.3f %9.1f\n", r.particle_name.c_str(),
                          std::string(fimap::to_string(r.reference_method)).c_str(), r.mask_area_px,
                          r.reference_area_px, r.iou, r.roi_percent);
            report << line;
            mean += r.iou;
        }
        if (!rows.empty()) {
            mean /= static_cast<double>(rows.size());
            std::snprintf(line, sizeof line, "  mean IoU %.4f\n", mean);
            report << line;
            summary.rows.push_back({"mean_area_iou", fimap::format_double(mean)});
        }
        out.csv("area_iou.csv", fimap::area_iou_table(rows));
    }

    out.text("metrics.txt", report.str());
    out.csv("metrics.csv", summary);
    add_log(out, run_log("evaluate", g,
                         {{"predicted", a.predicted.string()}, {"truth", a.truth.string()},
                          {"areas", a.areas.string()}},
                         {{"match_radius_px", a.match_radius}, {"reference", g.reference}}, {}));
    out.commit();
    std::cout << report.str();
}

// ---------------------------------------------------------------- distance-matrix

struct DistanceArgs {
    fs::path library;
    fs::path matrix;
    double threshold = 1.0;
    double lambda_rel = 1e-3;
};

fimap::DistanceMatrix matrix_from_table(const fimap::CsvTable& t) {
    fimap::DistanceMatrix dm;
    dm.class_names.assign(t.header.begin() + 1, t.header.end());
    const auto n = static_cast<Eigen::Index>(dm.class_names.size());
    if (static_cast<Eigen::Index>(t.rows.size()) != n) throw fimap::Error("distance table is not square");
    dm.values = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (t.rows[i][0] != dm.class_names[i]) throw fimap::Error("distance table rows and columns disagree");
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& cell = t.rows[i][j + 1];
            if (!cell.empty() && cell != "-") dm.values(i, j) = std::stod(cell);
        }
    }
    // Accept triangular input.
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            if (dm.values(i, j) == 0.0) dm.values(i, j) = dm.values(j, i);
            if (dm.values(j, i) == 0.0) dm.values(j, i) = dm.values(i, j);
        }
    }
    return dm;
}

void cmd_distance_matrix(const Globals& g, const DistanceArgs& a) {
    if (a.library.empty() == a.matrix.empty()) throw fimap::Error("pass exactly one of --library or --matrix");
    const auto dm = a.library.empty() ? matrix_from_table(fimap::read_csv(a.matrix))
                                      : fimap::distance_matrix(fimap::load_library(a.library), a.lambda_rel);
    const auto pairs = fimap::flag_confusable_pairs(dm, a.threshold);

    OutputSet out(g.output_dir);
    out.csv("distance_matrix.csv", fimap::distance_table(dm));
    out.csv("confusable_pairs.csv", fimap::confusable_pair_table(pairs));
    add_log(out, run_log("distance-matrix", g, {{"library", a.library.string()}, {"matrix", a.matrix.string()}},
                         {{"threshold", a.threshold}, {"lambda_rel", a.lambda_rel}}, {}));
    out.commit();
    for (const auto& p : pairs) std::cout << p.first << ',' << p.second << ',' << fimap::format_double(p.distance) << '\n';
}

// ---------------------------------------------------------------- calibrate-ev

struct CalibrateArgs {
    double f_number = 2.8;
    double shutter = 1.0;
    double iso = 100.0;
    double lux = 0.0;
};

void cmd_calibrate_ev(const CalibrateArgs& a) {
    const double ev = fimap::absolute_ev(a.f_number, a.shutter, a.iso);
    const double h = fimap::luminous_exposure(a.lux, a.shutter);
    std::printf("absolute EV %.2f (N=%g, t=%g s, ISO %g)\n", ev, a.f_number, a.shutter, a.iso);
    std::printf("luminous exposure %.1f lx*s (%g lx for %g s)\n", h, a.lux, a.shutter);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fimap: fluorescence imaging microplastic analysis pipeline"};
    app.set_version_flag("--version", FIMAP_VERSION);
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--output-dir,-o", g.output_dir, "Directory for all outputs")->capture_default_str();
    app.add_flag("--no-register", g.no_register, "Skip phase-correlation registration");
    app.add_option("--k", g.k, "Number of k-means clusters")->capture_default_str();
    app.add_option("--min-area", g.min_area, "Smallest kept particle, px")->capture_default_str();
    app.add_option("--tau", g.tau, "Classification threshold, standard deviations")->capture_default_str();
    app.add_option("--reference", g.reference, "Reference area rule")
        ->check(CLI::IsMember({"median", "q1"}))
        ->capture_default_str();
    app.add_option("--max-shift", g.max_shift, "Largest accepted registration shift, px")->capture_default_str();

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Render a synthetic stack with ground truth");
    s->add_option("--scene", synth.scene_path, "Scene spec (JSON)")->check(CLI::ExistingFile);
    s->add_option("--classes", synth.classes_path, "Class specs (JSON)")->check(CLI::ExistingFile);
    s->add_option("--class-count", synth.class_count, "Generated classes when --classes is absent");
    s->add_option("--per-class", synth.per_class, "Particles per class when --scene is absent");
    s->add_option("--width", synth.width);
    s->add_option("--height", synth.height);
    s->add_option("--r-min", synth.r_min);
    s->add_option("--r-max", synth.r_max);
    s->add_option("--sigma-h", synth.sigma_h, "Hue noise, degrees");
    s->add_option("--sigma-s", synth.sigma_s);
    s->add_option("--sigma-v", synth.sigma_v);
    s->add_option("--vignette", synth.vignette);

    SegmentArgs seg;
    auto* sg = app.add_subcommand("segment", "Particle mask, labels and region table");
    sg->add_option("manifest", seg.manifest, "Stack manifest (JSON)")->required();
    sg->add_option("--selection", seg.selection)->check(CLI::IsMember({"brightest", "luminance_split"}));
    sg->add_option("--feature-space", seg.feature_space)->check(CLI::IsMember({"ycbcr", "rgb"}));
    sg->add_option("--preset", seg.preset)->check(CLI::IsMember({"turbid", "small"}));
    sg->add_flag("--no-fill", seg.no_fill, "Keep interior holes");

    ExtractArgs ext;
    auto* ex = app.add_subcommand("extract", "Per-particle fingerprints");
    ex->add_option("manifest", ext.manifest)->required();
    ex->add_option("--labels", ext.labels, "16-bit label raster from segment")->required()->check(CLI::ExistingFile);
    ex->add_option("--registration", ext.registration, "Offsets table from segment")->check(CLI::ExistingFile);
    ex->add_option("--encoding", ext.encoding)->check(CLI::IsMember({"chroma", "chroma_with_std"}));
    ex->add_flag("--pixel-covariance", ext.pixel_covariance, "Store per-pixel covariance for one-exemplar training");

    BuildArgs build;
    auto* bl = app.add_subcommand("build-library", "Polymer signatures from labeled fingerprints");
    bl->add_option("--train", build.train, "CLASS=fingerprints.json[:ID,ID,...]");
    bl->add_option("--fingerprints", build.fingerprints)->check(CLI::ExistingFile);
    bl->add_option("--regions", build.regions)->check(CLI::ExistingFile);
    bl->add_option("--truth", build.truth)->check(CLI::ExistingFile);
    bl->add_option("--match-radius", build.match_radius);
    bl->add_option("--covariance", build.covariance)->check(CLI::IsMember({"samples", "pixel"}));
    bl->add_option("--lambda-rel", build.lambda_rel);

    ClassifyArgs cls;
    auto* cl = app.add_subcommand("classify", "Assign each particle to a library class");
    cl->add_option("--library", cls.library)->required()->check(CLI::ExistingFile);
    cl->add_option("--fingerprints", cls.fingerprints)->required()->check(CLI::ExistingFile);
    cl->add_option("--labels", cls.labels)->required()->check(CLI::ExistingFile);

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Detection scores and area IoU table");
    e->add_option("--predicted", ev.predicted)->check(CLI::ExistingFile);
    e->add_option("--truth", ev.truth)->check(CLI::ExistingFile);
    e->add_option("--areas", ev.areas, "particle,reference,mask_area_px,area_1,...")->check(CLI::ExistingFile);
    e->add_option("--match-radius", ev.match_radius);

    DistanceArgs dist;
    auto* d = app.add_subcommand("distance-matrix", "Class distances and confusable pairs");
    d->add_option("--library", dist.library)->check(CLI::ExistingFile);
    d->add_option("--matrix", dist.matrix, "Precomputed square distance table")->check(CLI::ExistingFile);
    d->add_option("--threshold", dist.threshold)->capture_default_str();
    d->add_option("--lambda-rel", dist.lambda_rel);

    CalibrateArgs cal;
    auto* c = app.add_subcommand("calibrate-ev", "Exposure arithmetic");
    c->add_option("--f-number", cal.f_number)->capture_default_str();
    c->add_option("--shutter", cal.shutter, "Seconds")->required();
    c->add_option("--iso", cal.iso)->capture_default_str();
    c->add_option("--lux", cal.lux, "Illuminance at the sample")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s) cmd_synth(g, synth);
        else if (*sg) cmd_segment(g, seg);
        else if (*ex) cmd_extract(g, ext);
        else if (*bl) cmd_build_library(g, build);
        else if (*cl) cmd_classify(g, cls);
        else if (*e) cmd_evaluate(g, ev);
        else if (*d) cmd_distance_matrix(g, dist);
        else if (*c) cmd_calibrate_ev(cal);
    } catch (const fimap::RegistrationError& err) {
        std::cerr << "fimap: registration failed: " << err.what() << '\n';
        return 3;
    } catch (const std::exception& err) {
        std::cerr << "fimap: " << err.what() << '\n';
        return 2;
    }
    return 0;
}
