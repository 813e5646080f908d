#include "fimap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "fimap/error.hpp"

namespace fimap {

using nlohmann::json;

std::string_view to_string(OpticalFilter f) {
    switch (f) {
    case OpticalFilter::none: return "none";
    case OpticalFilter::yellow: return "yellow";
    case OpticalFilter::orange: return "orange";
    case OpticalFilter::red: return "red";
    case OpticalFilter::green: return "green";
    }
    return "none";
}

OpticalFilter parse_optical_filter(std::string_view s) {
    for (auto f : {OpticalFilter::none, OpticalFilter::yellow, OpticalFilter::orange,
                   OpticalFilter::red, OpticalFilter::green}) {
        if (to_string(f) == s) {
            return f;
        }
    }
    throw Error("unknown optical filter '" + std::string(s) + "'");
}

std::size_t StackManifest::position_of(int index) const {
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        if (conditions[i].index == index) {
            return i;
        }
    }
    throw Error("no condition with index " + std::to_string(index));
}

void StackManifest::validate() {
    warnings.clear();
    if (!(pixel_scale_um_per_px > 0.0) || !std::isfinite(pixel_scale_um_per_px)) {
        throw Error("nonpositive pixel scale");
    }
    if (conditions.empty()) {
        throw Error("manifest has no conditions");
    }
    std::set<int> seen;
    for (const auto& c : conditions) {
        if (c.index < 1 || c.index > 20) {
            throw Error("condition index " + std::to_string(c.index) + " outside 1..20");
        }
        if (!seen.insert(c.index).second) {
            throw Error("duplicate condition index " + std::to_string(c.index));
        }
        if (std::find(kExcitationWavelengths.begin(), kExcitationWavelengths.end(),
                      c.excitation_wavelength_nm) == kExcitationWavelengths.end()) {
            throw Error("condition " + std::to_string(c.index) + ": unsupported excitation wavelength " +
                        std::to_string(c.excitation_wavelength_nm) + " nm");
        }
    }
    if (!seen.contains(mask_condition_index)) {
        throw Error("missing mask condition " + std::to_string(mask_condition_index));
    }

    std::set<std::pair<int, OpticalFilter>> grid;
    for (const auto& c : conditions) {
        if (c.optical_filter != OpticalFilter::none) {
            grid.emplace(c.excitation_wavelength_nm, c.optical_filter);
        }
    }
    canonical = conditions.size() == 20 && grid.size() == 20;
    if (!canonical) {
        warnings.push_back("non-canonical manifest: " + std::to_string(conditions.size()) +
                           " conditions (the full rig has 20 = 5 wavelengths x 4 filters)");
    }
}

std::vector<IlluminationCondition> canonical_conditions() {
    std::vector<IlluminationCondition> out;
    for (std::size_t f = 0; f < kCanonicalFilters.size(); ++f) {
        for (std::size_t w = 0; w < kExcitationWavelengths.size(); ++w) {
            IlluminationCondition c;
            c.index = static_cast<int>(f * kExcitationWavelengths.size() + w + 1);
            c.excitation_wavelength_nm = kExcitationWavelengths[w];
            c.optical_filter = kCanonicalFilters[f];
            out.push_back(c);
        }
    }
    return out;
}

StackManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("manifest parse failure: ") + e.what());
    }

    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };

    StackManifest m;
    try {
        m.name = doc.value("name", std::string{});
        m.mask_condition_index = doc.value("mask_condition_index", kDefaultMaskCondition);
        m.pixel_scale_um_per_px = doc.value("pixel_scale_um_per_px", kDefaultPixelScaleUm);
        for (const auto& entry : doc.at("conditions")) {
            IlluminationCondition c;
            c.index = entry.at("index").get<int>();
            c.excitation_wavelength_nm = entry.at("wavelength_nm").get<int>();
            c.optical_filter = parse_optical_filter(entry.value("filter", std::string("none")));
            c.image_path = resolve(entry.at("image").get<std::string>());
            if (entry.contains("high_ev_image") && !entry["high_ev_image"].is_null()) {
                c.high_ev_companion_path = resolve(entry["high_ev_image"].get<std::string>());
            }
            m.conditions.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("manifest parse failure: ") + e.what());
    }
    m.validate();
    return m;
}

StackManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open manifest " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str(), path.parent_path());
}

void save_manifest(const StackManifest& manifest, const std::filesystem::path& path) {
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) {
        if (base.empty()) {
            return p.generic_string();
        }
        auto r = p.lexically_relative(base);
        return (r.empty() ? p : r).generic_string();
    };
    json doc;
    doc["name"] = manifest.name;
    doc["mask_condition_index"] = manifest.mask_condition_index;
    doc["pixel_scale_um_per_px"] = manifest.pixel_scale_um_per_px;
    doc["conditions"] = json::array();
    for (const auto& c : manifest.conditions) {
        json e;
        e["index"] = c.index;
        e["wavelength_nm"] = c.excitation_wavelength_nm;
        e["filter"] = std::string(to_string(c.optical_filter));
        e["image"] = rel(c.image_path);
        if (c.high_ev_companion_path) {
            e["high_ev_image"] = rel(*c.high_ev_companion_path);
        }
        doc["conditions"].push_back(std::move(e));
    }
    if (!base.empty()) {
        std::filesystem::create_directories(base);
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write manifest " + path.string());
    }
    out << doc.dump(2) << '\n';
}

ImageStack load_stack(const StackManifest& manifest) {
    ImageStack stack;
    for (const auto& c : manifest.conditions) {
        RgbImage img = read_rgb_image(c.image_path, &stack.warnings);
        if (stack.images.empty()) {
            stack.width = img.width;
            stack.height = img.height;
        } else if (img.width != stack.width || img.height != stack.height) {
            throw Error("dimension mismatch: condition " + std::to_string(c.index) + " is " +
                        std::to_string(img.width) + "x" + std::to_string(img.height) + ", expected " +
                        std::to_string(stack.width) + "x" + std::to_string(stack.height));
        }
        std::optional<RgbImage> companion;
        if (c.high_ev_companion_path) {
            companion = read_rgb_image(*c.high_ev_companion_path, &stack.warnings);
            if (companion->width != stack.width || companion->height != stack.height) {
                throw Error("dimension mismatch: high-EV companion of condition " + std::to_string(c.index));
            }
        }
        stack.images.push_back(std::move(img));
        stack.high_ev.push_back(std::move(companion));
    }
    stack.registration_offsets.assign(stack.images.size(), Offset{});
    return stack;
}

namespace {

struct FftwArray {
    explicit FftwArray(std::size_t n)
        : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!ptr) {
            throw std::bad_alloc();
        }
    }
    ~FftwArray() { fftw_free(ptr); }
    FftwArray(const FftwArray&) = delete;
    FftwArray& operator=(const FftwArray&) = delete;

    fftw_complex* ptr;
};

struct FftwPlan {
    explicit FftwPlan(fftw_plan p) : plan(p) {}
    ~FftwPlan() { fftw_destroy_plan(plan); }
    FftwPlan(const FftwPlan&) = delete;
    FftwPlan& operator=(const FftwPlan&) = delete;

    void run() const { fftw_execute(plan); }

    fftw_plan plan;
};

// Windowed, zero-mean luma of the central w x h region.
void load_luma(const RgbImage& img, int x0, int y0, int w, int h, fftw_complex* dst) {
    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const RgbPixel p = img.at(x0 + x, y0 + y);
            const double l = luma(p.r, p.g, p.b);
            dst[static_cast<std::size_t>(y) * w + x][0] = l;
            dst[static_cast<std::size_t>(y) * w + x][1] = 0.0;
            sum += l;
        }
    }
    const double mean = sum / (static_cast<double>(w) * h);
    auto hann = [](int i, int n) {
        return n > 1 ? 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1))) : 1.0;
    };
    for (int y = 0; y < h; ++y) {
        const double wy = hann(y, h);
        for (int x = 0; x < w; ++x) {
            auto& v = dst[static_cast<std::size_t>(y) * w + x][0];
            v = (v - mean) * wy * hann(x, w);
        }
    }
}

} // namespace

Offset phase_correlate(const RgbImage& reference, const RgbImage& moving, int max_shift_px,
                       int condition_index, int window) {
    if (max_shift_px < 0) {
        throw Error("max_shift_px must be nonnegative");
    }
    if (reference.width != moving.width || reference.height != moving.height) {
        throw Error("dimension mismatch: condition " + std::to_string(condition_index));
    }
    const int w = std::min(reference.width, window);
    const int h = std::min(reference.height, window);
    if (w < 2 || h < 2) {
        return {};
    }
    const int x0 = (reference.width - w) / 2;
    const int y0 = (reference.height - h) / 2;
    const std::size_t n = static_cast<std::size_t>(w) * h;

    FftwArray ref(n), mov(n), ref_f(n), mov_f(n);
    load_luma(reference, x0, y0, w, h, ref.ptr);
    load_luma(moving, x0, y0, w, h, mov.ptr);

    {
        FftwPlan pr(fftw_plan_dft_2d(h, w, ref.ptr, ref_f.ptr, FFTW_FORWARD, FFTW_ESTIMATE));
        FftwPlan pm(fftw_plan_dft_2d(h, w, mov.ptr, mov_f.ptr, FFTW_FORWARD, FFTW_ESTIMATE));
        pr.run();
        pm.run();
    }

    // Normalized cross-power spectrum, written back into mov_f.
    for (std::size_t i = 0; i < n; ++i) {
        const double ar = mov_f.ptr[i][0], ai = mov_f.ptr[i][1];
        const double br = ref_f.ptr[i][0], bi = -ref_f.ptr[i][1];
        const double re = ar * br - ai * bi;
        const double im = ar * bi + ai * br;
        const double mag = std::hypot(re, im);
        mov_f.ptr[i][0] = mag > 1e-12 ? re / mag : 0.0;
        mov_f.ptr[i][1] = mag > 1e-12 ? im / mag : 0.0;
    }
    {
        FftwPlan pi(fftw_plan_dft_2d(h, w, mov_f.ptr, mov.ptr, FFTW_BACKWARD, FFTW_ESTIMATE));
        pi.run();
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (mov.ptr[i][0] > mov.ptr[best][0]) {
            best = i;
        }
    }
    int dx = static_cast<int>(best % w);
    int dy = static_cast<int>(best / w);
    if (dx > w / 2) {
        dx -= w;
    }
    if (dy > h / 2) {
        dy -= h;
    }
    if (std::abs(dx) > max_shift_px || std::abs(dy) > max_shift_px) {
        throw RegistrationError(condition_index,
                                "registration unreliable for condition " + std::to_string(condition_index) +
                                    ": correlation peak at (" + std::to_string(dx) + ", " + std::to_string(dy) +
                                    ") is beyond the search boundary of " + std::to_string(max_shift_px) + " px");
    }
    return {dx, dy};
}

std::vector<Offset> estimate_offsets(const ImageStack& stack, const StackManifest& manifest,
                                     int max_shift_px) {
    if (stack.size() != manifest.condition_count()) {
        throw Error("stack does not match manifest condition count");
    }
    const std::size_t ref = manifest.mask_position();
    std::vector<Offset> offsets(stack.size());
    for (std::size_t i = 0; i < stack.size(); ++i) {
        if (i != ref) {
            offsets[i] = phase_correlate(stack.images[ref], stack.images[i], max_shift_px,
                                         manifest.conditions[i].index);
        }
    }
    return offsets;
}

ImageStack apply_offsets(const ImageStack& stack, std::span<const Offset> offsets) {
    if (offsets.size() != stack.size()) {
        throw Error("apply_offsets: one offset per condition required");
    }
    int x_lo = 0, y_lo = 0, x_hi = stack.width, y_hi = stack.height;
    for (const auto& o : offsets) {
        x_lo = std::max(x_lo, -o.dx);
        y_lo = std::max(y_lo, -o.dy);
        x_hi = std::min(x_hi, stack.width - o.dx);
        y_hi = std::min(y_hi, stack.height - o.dy);
    }
    if (x_hi <= x_lo || y_hi <= y_lo) {
        throw Error("registration offsets leave no common overlap");
    }
    const int w = x_hi - x_lo;
    const int h = y_hi - y_lo;

    ImageStack out;
    out.width = w;
    out.height = h;
    out.origin_x = stack.origin_x + x_lo;
    out.origin_y = stack.origin_y + y_lo;
    out.warnings = stack.warnings;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& o = offsets[i];
        out.images.push_back(stack.images[i].crop(x_lo + o.dx, y_lo + o.dy, w, h));
        if (stack.high_ev[i]) {
            out.high_ev.emplace_back(stack.high_ev[i]->crop(x_lo + o.dx, y_lo + o.dy, w, h));
        } else {
            out.high_ev.emplace_back(std::nullopt);
        }
        const Offset prior = i < stack.registration_offsets.size() ? stack.registration_offsets[i] : Offset{};
        out.registration_offsets.push_back({prior.dx + o.dx, prior.dy + o.dy});
    }
    return out;
}

ImageStack register_stack(const ImageStack& stack, const StackManifest& manifest, int max_shift_px) {
    const auto offsets = estimate_offsets(stack, manifest, max_shift_px);
    return apply_offsets(stack, offsets);
}

} // namespace fimap
