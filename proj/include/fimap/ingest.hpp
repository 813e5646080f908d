#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fimap/image.hpp"

namespace fimap {

enum class OpticalFilter { none, yellow, orange, red, green };

std::string_view to_string(OpticalFilter f);
OpticalFilter parse_optical_filter(std::string_view s);

/// Excitation wavelengths of the illumination unit, in nm.
inline constexpr std::array<int, 5> kExcitationWavelengths = {265, 310, 365, 405, 450};

/// Color filters of the canonical rig, ordered by cut-on wavelength.
inline constexpr std::array<OpticalFilter, 4> kCanonicalFilters = {
    OpticalFilter::green, OpticalFilter::yellow, OpticalFilter::orange, OpticalFilter::red};

inline constexpr int kDefaultMaskCondition = 12;
inline constexpr double kDefaultPixelScaleUm = 11.65;
inline constexpr int kDefaultMaxShiftPx = 20;

struct IlluminationCondition {
    int index = 0;
    int excitation_wavelength_nm = 0;
    OpticalFilter optical_filter = OpticalFilter::none;
    std::filesystem::path image_path;
    std::optional<std::filesystem::path> high_ev_companion_path;
};

struct StackManifest {
    std::string name;
    std::vector<IlluminationCondition> conditions;
    int mask_condition_index = kDefaultMaskCondition;
    double pixel_scale_um_per_px = kDefaultPixelScaleUm;

    // Set by validate(): false unless the manifest holds exactly the
    // 5 wavelengths x 4 color filters grid.
    bool canonical = false;
    std::vector<std::string> warnings;

    /// Checks every invariant, sets `canonical` and refreshes `warnings`.
    /// Throws fimap::Error naming the violation.
    void validate();

    std::size_t condition_count() const noexcept { return conditions.size(); }
    /// Position of a condition index within `conditions`; throws if absent.
    std::size_t position_of(int index) const;
    std::size_t mask_position() const { return position_of(mask_condition_index); }
};

/// The 20 canonical conditions, filter-major: index = 5 * filter + wavelength + 1
/// with filters ordered green, yellow, orange, red. Image paths are left empty.
std::vector<IlluminationCondition> canonical_conditions();

/// Parses manifest JSON. Relative image paths are resolved against `base_dir`.
StackManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
StackManifest load_manifest(const std::filesystem::path& path);

/// Image paths are written relative to the manifest's directory when possible.
void save_manifest(const StackManifest& manifest, const std::filesystem::path& path);

struct Offset {
    int dx = 0;
    int dy = 0;

    friend bool operator==(const Offset&, const Offset&) = default;
};

struct ImageStack {
    std::vector<RgbImage> images;              // manifest condition order
    std::vector<std::optional<RgbImage>> high_ev;
    int width = 0;
    int height = 0;
    std::vector<Offset> registration_offsets;  // per condition
    // Top-left corner of this stack within the unregistered frames.
    int origin_x = 0;
    int origin_y = 0;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return images.size(); }
};

ImageStack load_stack(const StackManifest& manifest);

/// Integer translation of `moving` relative to `reference` by phase
/// correlation of the luma channel: moving(x) ~= reference(x - offset).
/// At most `window` pixels per side around the frame center are used.
/// Throws RegistrationError (tagged with `condition_index`) when the
/// correlation peak lies outside +-max_shift_px.
Offset phase_correlate(const RgbImage& reference, const RgbImage& moving, int max_shift_px,
                       int condition_index = 0, int window = 1024);

std::vector<Offset> estimate_offsets(const ImageStack& stack, const StackManifest& manifest,
                                     int max_shift_px = kDefaultMaxShiftPx);

/// Undoes each offset and crops every image to the common valid area.
ImageStack apply_offsets(const ImageStack& stack, std::span<const Offset> offsets);

ImageStack register_stack(const ImageStack& stack, const StackManifest& manifest,
                          int max_shift_px = kDefaultMaxShiftPx);

} // namespace fimap
