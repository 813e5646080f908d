#include <cstring>
#include <map>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fimap/classify.hpp"
#include "fimap/colorspace.hpp"
#include "fimap/error.hpp"
#include "fimap/fingerprint.hpp"
#include "fimap/ingest.hpp"
#include "fimap/metrics.hpp"
#include "fimap/segment.hpp"
#include "fimap/synth.hpp"

namespace py = pybind11;
using namespace fimap;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

RgbImage image_from_array(const U8Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an HxWx3 uint8 array");
    RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.data.data(), a.data(), img.data.size());
    return img;
}

py::array_t<std::uint8_t> image_to_array(const RgbImage& img) {
    py::array_t<std::uint8_t> out({img.height, img.width, 3});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
    return out;
}

BinaryMask mask_from_array(const py::array& a) {
    const auto m = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(a);
    if (!m || m.ndim() != 2) throw py::value_error("expected a 2-D mask array");
    BinaryMask mask(static_cast<int>(m.shape(1)), static_cast<int>(m.shape(0)));
    const auto* p = m.data();
    for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = p[i] != 0;
    return mask;
}

py::array_t<bool> mask_to_array(const BinaryMask& mask) {
    py::array_t<bool> out({mask.height, mask.width});
    auto* p = out.mutable_data();
    for (std::size_t i = 0; i < mask.bits.size(); ++i) p[i] = mask.bits[i] != 0;
    return out;
}

py::array_t<std::int32_t> labels_to_array(const LabelMap& lm) {
    py::array_t<std::int32_t> out({lm.height, lm.width});
    std::memcpy(out.mutable_data(), lm.labels.data(), lm.labels.size() * sizeof(std::int32_t));
    return out;
}

LabelMap labels_from_array(const py::array& a) {
    const auto l = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>::ensure(a);
    if (!l || l.ndim() != 2) throw py::value_error("expected a 2-D label array");
    return label_map_from_raster(static_cast<int>(l.shape(1)), static_cast<int>(l.shape(0)),
                                 std::span<const std::uint16_t>(l.data(), static_cast<std::size_t>(l.size())));
}

py::dict region_dict(const Region& r) {
    py::dict d;
    d["id"] = r.id;
    d["area_px"] = r.area_px;
    d["centroid"] = py::make_tuple(r.centroid_x, r.centroid_y);
    d["bbox"] = py::make_tuple(r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1);
    d["minor_axis_px"] = r.minor_axis_px;
    d["major_axis_px"] = r.major_axis_px;
    return d;
}

py::object optional_float(const std::optional<double>& v) {
    return v ? py::object(py::float_(*v)) : py::object(py::none());
}

} // namespace

PYBIND11_MODULE(_fimap, m) {
    m.doc() = "Multi-condition fluorescence imaging of microplastics.";

    // Translators run newest first, so the subclass is registered last.
    const auto base = py::register_exception<Error>(m, "FimapError", PyExc_RuntimeError);
    py::register_exception<RegistrationError>(m, "RegistrationError", base.ptr());

    // colorspace
    m.def("rgb_to_ycbcr", [](int r, int g, int b) {
        const auto p = rgb_to_ycbcr(RgbPixel{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                             static_cast<std::uint8_t>(b)});
        return py::make_tuple(p.y, p.cb, p.cr);
    });
    m.def("rgb_to_hsv", [](int r, int g, int b) {
        const auto p = rgb_to_hsv(RgbPixel{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                           static_cast<std::uint8_t>(b)});
        return py::make_tuple(p.h, p.s, p.v);
    });
    m.def("hsv_to_rgb", [](double h, double s, double v) {
        const auto p = hsv_to_rgb({h, s, v});
        return py::make_tuple(p.r, p.g, p.b);
    });
    m.def("absolute_ev", &absolute_ev, py::arg("aperture_n"), py::arg("shutter_s"), py::arg("iso") = 100.0);
    m.def("luminous_exposure", &luminous_exposure, py::arg("lux"), py::arg("shutter_s"));

    // metrics
    m.def(
        "reference_area",
        [](const std::vector<double>& areas, const std::string& method) {
            return reference_area(areas, parse_reference_method(method));
        },
        py::arg("areas"), py::arg("method") = "median");
    m.def("area_ratio_iou", &area_ratio_iou, py::arg("mask_area"), py::arg("reference_area"));
    m.def("roi_percentage", &roi_percentage, py::arg("mask_area"), py::arg("reference_area"));
    m.def(
        "scores",
        [](std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
            const auto s = scores({tp, fp, tn, fn});
            py::dict d;
            d["iou"] = optional_float(s.iou);
            d["accuracy"] = optional_float(s.accuracy);
            d["precision"] = optional_float(s.precision);
            d["recall"] = optional_float(s.recall);
            d["f1"] = optional_float(s.f1);
            return d;
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

    // manifests and stacks
    py::class_<StackManifest>(m, "StackManifest")
        .def_readonly("name", &StackManifest::name)
        .def_readonly("mask_condition_index", &StackManifest::mask_condition_index)
        .def_readonly("pixel_scale_um_per_px", &StackManifest::pixel_scale_um_per_px)
        .def_readonly("canonical", &StackManifest::canonical)
        .def_readonly("warnings", &StackManifest::warnings)
        .def_property_readonly("condition_count", &StackManifest::condition_count)
        .def_property_readonly("mask_position", &StackManifest::mask_position)
        .def("save", [](const StackManifest& s, const std::filesystem::path& p) { save_manifest(s, p); });
    m.def("load_manifest", &load_manifest, py::arg("path"));
    m.def(
        "synthetic_manifest", [](const std::filesystem::path& dir) { return synthetic_manifest(dir); },
        py::arg("directory"));
    m.def("manifest_digest", &manifest_digest);

    py::class_<ImageStack>(m, "ImageStack")
        .def_readonly("width", &ImageStack::width)
        .def_readonly("height", &ImageStack::height)
        .def_readonly("warnings", &ImageStack::warnings)
        .def_property_readonly("offsets",
                               [](const ImageStack& s) {
                                   std::vector<std::pair<int, int>> out;
                                   for (const auto& o : s.registration_offsets) out.emplace_back(o.dx, o.dy);
                                   return out;
                               })
        .def_property_readonly("images",
                               [](const ImageStack& s) {
                                   py::list out;
                                   for (const auto& img : s.images) out.append(image_to_array(img));
                                   return out;
                               })
        .def("__len__", &ImageStack::size);
    m.def("load_stack", &load_stack, py::arg("manifest"));
    m.def("register_stack", &register_stack, py::arg("stack"), py::arg("manifest"),
          py::arg("max_shift_px") = kDefaultMaxShiftPx);

    // segmentation
    m.def(
        "build_mask",
        [](const U8Array& image, int k, std::uint64_t seed, const std::string& selection,
           const std::string& feature_space, bool fill) {
            SegmentationConfig cfg;
            cfg.k = k;
            cfg.rng_seed = seed;
            cfg.selection = parse_cluster_selection(selection);
            cfg.feature_space = parse_feature_space(feature_space);
            cfg.fill_holes = fill;
            cfg.validate();
            return mask_to_array(build_mask(image_from_array(image), cfg));
        },
        py::arg("image"), py::arg("k") = 3, py::arg("seed") = 42, py::arg("selection") = "luminance_split",
        py::arg("feature_space") = "ycbcr", py::arg("fill_holes") = true);
    m.def(
        "label_regions",
        [](const py::array& mask, int min_area_px) {
            const auto lm = label_regions(mask_from_array(mask), min_area_px);
            py::list regions;
            for (const auto& r : lm.regions) regions.append(region_dict(r));
            return py::make_tuple(labels_to_array(lm), regions);
        },
        py::arg("mask"), py::arg("min_area_px") = 9);

    // synthetic data
    py::class_<SynthClassSpec>(m, "SynthClassSpec")
        .def_readonly("class_name", &SynthClassSpec::class_name)
        .def_property_readonly("hsv", [](const SynthClassSpec& c) {
            std::vector<std::tuple<double, double, double>> out;
            for (const auto& p : c.per_condition_hsv) out.emplace_back(p.h, p.s, p.v);
            return out;
        });
    py::class_<SynthSceneSpec>(m, "SynthSceneSpec")
        .def_readonly("width", &SynthSceneSpec::width)
        .def_readonly("height", &SynthSceneSpec::height)
        .def_property_readonly("particle_count", [](const SynthSceneSpec& s) { return s.particles.size(); })
        .def("save", [](const SynthSceneSpec& s, const std::filesystem::path& p) { save_scene_spec(s, p); });
    py::class_<SynthResult>(m, "SynthResult")
        .def_readonly("stack", &SynthResult::stack)
        .def_readonly("truth_classes", &SynthResult::truth_labels)
        .def_property_readonly("truth_labels", [](const SynthResult& r) { return labels_to_array(r.truth); });
    m.def(
        "spaced_hue_classes",
        [](int count, const StackManifest& manifest, std::tuple<double, double, double> noise,
           std::uint64_t seed, double spacing) {
            return spaced_hue_classes(count, manifest,
                                      {std::get<0>(noise), std::get<1>(noise), std::get<2>(noise)}, seed, spacing);
        },
        py::arg("count"), py::arg("manifest"), py::arg("noise") = std::make_tuple(0.0, 0.0, 0.0),
        py::arg("seed") = 42, py::arg("hue_spacing_deg") = 36.0);
    m.def(
        "random_disk_scene",
        [](int w, int h, const std::vector<SynthClassSpec>& classes, int per_class, double r_min, double r_max,
           std::uint64_t seed) { return random_disk_scene(w, h, classes, per_class, r_min, r_max, seed); },
        py::arg("width"), py::arg("height"), py::arg("classes"),
          py::arg("per_class"), py::arg("r_min"), py::arg("r_max"), py::arg("seed"));
    m.def(
        "generate_stack",
        [](const SynthSceneSpec& scene, const std::vector<SynthClassSpec>& classes, const StackManifest& manifest) {
            return generate_stack(scene, classes, manifest);
        },
        py::arg("scene"), py::arg("classes"), py::arg("manifest"));

    // fingerprints and library
    py::class_<ParticleFingerprint>(m, "ParticleFingerprint")
        .def_readonly("region_id", &ParticleFingerprint::region_id)
        .def_readonly("pixel_count", &ParticleFingerprint::pixel_count)
        .def_readonly("feature_vector", &ParticleFingerprint::feature_vector)
        .def_property_readonly("mean_hsv", [](const ParticleFingerprint& fp) {
            std::vector<std::tuple<double, double, double>> out;
            for (const auto& s : fp.per_condition) out.emplace_back(s.mean_h, s.mean_s, s.mean_v);
            return out;
        });
    m.def(
        "extract_fingerprints",
        [](const ImageStack& stack, const py::array& labels, const StackManifest& manifest,
           const std::string& encoding, bool pixel_covariance) {
            ExtractOptions opts;
            opts.encoding = parse_feature_encoding(encoding);
            opts.pixel_covariance = pixel_covariance;
            return extract_fingerprints(stack, labels_from_array(labels), manifest, opts);
        },
        py::arg("stack"), py::arg("labels"), py::arg("manifest"), py::arg("encoding") = "chroma",
        py::arg("pixel_covariance") = false);

    py::class_<FingerprintLibrary>(m, "FingerprintLibrary")
        .def_readonly("manifest_digest", &FingerprintLibrary::manifest_digest)
        .def_property_readonly("dimension", &FingerprintLibrary::dimension)
        .def_property_readonly("class_names",
                               [](const FingerprintLibrary& lib) {
                                   std::vector<std::string> out;
                                   for (const auto& s : lib.signatures) out.push_back(s.class_name);
                                   return out;
                               })
        .def("mean_vector",
             [](const FingerprintLibrary& lib, const std::string& name) {
                 const auto* s = lib.find(name);
                 if (!s) throw py::key_error(name);
                 return s->mean_vector;
             })
        .def("save", [](const FingerprintLibrary& lib, const std::filesystem::path& p) { save_library(lib, p); });
    m.def(
        "build_library",
        [](const TrainingSamples& samples, double lambda_rel, const std::string& covariance,
           const std::string& digest) {
            LibraryOptions opts;
            opts.lambda_rel = lambda_rel;
            opts.covariance = parse_covariance_source(covariance);
            return build_library(samples, opts, digest);
        },
        py::arg("samples"), py::arg("lambda_rel") = 1e-3, py::arg("covariance") = "samples",
        py::arg("manifest_digest") = "");
    m.def("load_library", &load_library, py::arg("path"));

    // classification
    py::class_<ClassificationResult>(m, "ClassificationResult")
        .def_readonly("region_id", &ClassificationResult::region_id)
        .def_readonly("assigned_class", &ClassificationResult::assigned_class)
        .def_readonly("threshold_used", &ClassificationResult::threshold_used)
        .def_property_readonly("classified", &ClassificationResult::classified)
        .def_property_readonly("min_distance", &ClassificationResult::min_distance)
        .def_property_readonly("distances", [](const ClassificationResult& r) {
            return std::map<std::string, double>(r.distances.begin(), r.distances.end());
        });
    m.def("mahalanobis", &mahalanobis, py::arg("x"), py::arg("mean"), py::arg("inverse_covariance"));
    m.def(
        "classify",
        [](const std::vector<ParticleFingerprint>& fps, const FingerprintLibrary& lib, double tau) {
            std::vector<ClassificationResult> out;
            for (const auto& fp : fps) out.push_back(classify_particle(fp, lib, tau));
            return out;
        },
        py::arg("fingerprints"), py::arg("library"), py::arg("tau") = kDefaultTau);
    m.def(
        "distance_matrix",
        [](const FingerprintLibrary& lib, double lambda_rel) {
            const auto dm = distance_matrix(lib, lambda_rel);
            return py::make_tuple(dm.class_names, dm.values);
        },
        py::arg("library"), py::arg("lambda_rel") = 1e-3);
    m.def(
        "flag_confusable_pairs",
        [](const std::vector<std::string>& names, const Eigen::MatrixXd& values, double threshold) {
            const auto n = static_cast<Eigen::Index>(names.size());
            if (values.rows() != n || values.cols() != n) throw py::value_error("matrix must be square and match the class names");
            std::vector<std::tuple<std::string, std::string, double>> out;
            for (const auto& p : flag_confusable_pairs({names, values}, threshold))
                out.emplace_back(p.first, p.second, p.distance);
            return out;
        },
        py::arg("class_names"), py::arg("values"), py::arg("threshold") = 1.0);
}
