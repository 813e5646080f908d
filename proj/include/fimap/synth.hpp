#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fimap/colorspace.hpp"
#include "fimap/ingest.hpp"
#include "fimap/segment.hpp"

namespace fimap {

struct HsvNoise {
    double h_deg = 0.0;
    double s = 0.0;
    double v = 0.0;
};

struct SynthClassSpec {
    std::string class_name;
    std::vector<HsvPixel> per_condition_hsv;  // manifest condition order
    HsvNoise noise;
};

enum class ShapeKind { disk, ellipse, rectangle };

std::string_view to_string(ShapeKind s);
ShapeKind parse_shape_kind(std::string_view s);

struct SynthParticle {
    std::string class_name;
    ShapeKind shape = ShapeKind::disk;
    // Placed at random (rejection sampling) when absent.
    std::optional<std::array<double, 2>> center;
    // disk: radius. ellipse: semi-axes. rectangle: half-width, half-height.
    // size_b <= 0 means size_b = size_a.
    double size_a = 10.0;
    double size_b = 0.0;
    double angle_deg = 0.0;
};

struct SynthSceneSpec {
    int width = 256;
    int height = 256;
    double background_v = 0.05;  // [0, 0.2]
    std::vector<SynthParticle> particles;
    std::uint64_t rng_seed = 42;
    double vignette_strength = 0.0;  // [0, 1]
    int min_gap_px = 3;
    int max_placement_attempts = 1000;
};

struct SynthResult {
    ImageStack stack;
    LabelMap truth;                         // region id i + 1 is particle i
    std::vector<std::string> truth_labels;  // class of region id i + 1 at [i]
};

/// Renders every condition of `manifest`: dark gray background, particles in
/// their class color plus seeded Gaussian HSV noise, optional radial
/// vignette. Throws on an unknown class, a bad spec, or failed placement.
SynthResult generate_stack(const SynthSceneSpec& scene, std::span<const SynthClassSpec> classes,
                           const StackManifest& manifest);

/// `count` classes whose hues are `hue_spacing_deg` apart in every condition.
/// In the mask condition every class is bright and weakly saturated so one
/// luminance cluster holds all particles.
std::vector<SynthClassSpec> spaced_hue_classes(int count, const StackManifest& manifest, HsvNoise noise,
                                               std::uint64_t seed, double hue_spacing_deg = 36.0);

/// Randomly placed disks, `per_class` of each class, radii in [r_min, r_max].
SynthSceneSpec random_disk_scene(int width, int height, std::span<const SynthClassSpec> classes, int per_class,
                                 double r_min, double r_max, std::uint64_t seed);

/// Manifest over the canonical 20 conditions with images named
/// `<prefix>NN.png` next to `path`.
StackManifest synthetic_manifest(const std::filesystem::path& dir, std::string name = "synthetic",
                                 std::string_view prefix = "condition_");

SynthSceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const SynthSceneSpec& scene, const std::filesystem::path& path);
std::vector<SynthClassSpec> load_class_specs(const std::filesystem::path& path);
void save_class_specs(std::span<const SynthClassSpec> classes, const std::filesystem::path& path);

} // namespace fimap
