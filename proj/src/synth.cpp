#include "fimap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "fimap/error.hpp"

namespace fimap {

using nlohmann::json;

std::string_view to_string(ShapeKind s) {
    switch (s) {
    case ShapeKind::disk: return "disk";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::rectangle: return "rectangle";
    }
    return "disk";
}

ShapeKind parse_shape_kind(std::string_view s) {
    if (s == "disk") return ShapeKind::disk;
    if (s == "ellipse") return ShapeKind::ellipse;
    if (s == "rectangle") return ShapeKind::rectangle;
    throw Error("unknown particle shape '" + std::string(s) + "'");
}

namespace {

struct Placed {
    const SynthParticle* spec;
    double cx, cy;
    double a, b;
    double radius;  // bounding circle
};

double bounding_radius(const SynthParticle& p, double a, double b) {
    return p.shape == ShapeKind::rectangle ? std::hypot(a, b) : std::max(a, b);
}

bool inside(const Placed& p, double x, double y) {
    const double dx = x - p.cx, dy = y - p.cy;
    if (p.spec->shape == ShapeKind::disk) {
        return dx * dx + dy * dy <= p.a * p.a;
    }
    const double t = p.spec->angle_deg * std::numbers::pi / 180.0;
    const double u = dx * std::cos(t) + dy * std::sin(t);
    const double v = -dx * std::sin(t) + dy * std::cos(t);
    if (p.spec->shape == ShapeKind::ellipse) {
        return (u * u) / (p.a * p.a) + (v * v) / (p.b * p.b) <= 1.0;
    }
    return std::fabs(u) <= p.a && std::fabs(v) <= p.b;
}

bool fits(const Placed& c, const std::vector<Placed>& placed, const SynthSceneSpec& scene) {
    if (c.cx - c.radius < 0 || c.cy - c.radius < 0 || c.cx + c.radius > scene.width - 1 ||
        c.cy + c.radius > scene.height - 1) {
        return false;
    }
    for (const auto& o : placed) {
        if (std::hypot(c.cx - o.cx, c.cy - o.cy) < c.radius + o.radius + scene.min_gap_px) {
            return false;
        }
    }
    return true;
}

void validate_scene(const SynthSceneSpec& scene) {
    if (scene.width <= 0 || scene.height <= 0) throw Error("synth: scene dimensions must be positive");
    if (scene.background_v < 0.0 || scene.background_v > 0.2) throw Error("synth: background_v must lie in [0, 0.2]");
    if (scene.vignette_strength < 0.0 || scene.vignette_strength > 1.0) {
        throw Error("synth: vignette_strength must lie in [0, 1]");
    }
    if (scene.min_gap_px < 0) throw Error("synth: min_gap_px must be nonnegative");
}

} // namespace

SynthResult generate_stack(const SynthSceneSpec& scene, std::span<const SynthClassSpec> classes,
                           const StackManifest& manifest) {
    validate_scene(scene);
    const std::size_t m = manifest.condition_count();
    std::map<std::string, const SynthClassSpec*> by_name;
    for (const auto& c : classes) {
        if (c.per_condition_hsv.size() != m) {
            throw Error("synth: class '" + c.class_name + "' has " + std::to_string(c.per_condition_hsv.size()) +
                        " colors for " + std::to_string(m) + " conditions");
        }
        if (c.noise.h_deg < 0 || c.noise.s < 0 || c.noise.v < 0) {
            throw Error("synth: class '" + c.class_name + "' has a negative noise sigma");
        }
        by_name[c.class_name] = &c;
    }

    // Placement.
    std::mt19937_64 place_rng(scene.rng_seed);
    std::vector<Placed> placed;
    for (const auto& p : scene.particles) {
        if (!by_name.contains(p.class_name)) {
            throw Error("synth: unknown class '" + p.class_name + "'");
        }
        const double a = p.size_a;
        const double b = p.size_b > 0.0 ? p.size_b : p.size_a;
        if (!(a > 0.0)) throw Error("synth: particle size must be positive");
        Placed c{&p, 0.0, 0.0, a, b, bounding_radius(p, a, b)};
        if (p.center) {
            c.cx = (*p.center)[0];
            c.cy = (*p.center)[1];
            if (!fits(c, placed, scene)) {
                throw Error("synth: particle of class '" + p.class_name + "' overlaps another or leaves the frame");
            }
        } else {
            std::uniform_real_distribution<double> ux(c.radius, scene.width - 1 - c.radius);
            std::uniform_real_distribution<double> uy(c.radius, scene.height - 1 - c.radius);
            bool ok = false;
            if (scene.width - 1 - 2 * c.radius >= 0 && scene.height - 1 - 2 * c.radius >= 0) {
                for (int attempt = 0; attempt < scene.max_placement_attempts && !ok; ++attempt) {
                    c.cx = ux(place_rng);
                    c.cy = uy(place_rng);
                    ok = fits(c, placed, scene);
                }
            }
            if (!ok) {
                throw Error("synth: placement failed for a particle of class '" + p.class_name + "' after " +
                            std::to_string(scene.max_placement_attempts) + " attempts");
            }
        }
        placed.push_back(c);
    }

    // Truth.
    SynthResult out;
    out.truth.width = scene.width;
    out.truth.height = scene.height;
    out.truth.labels.assign(static_cast<std::size_t>(scene.width) * scene.height, 0);
    for (std::size_t i = 0; i < placed.size(); ++i) {
        const auto& c = placed[i];
        std::vector<PixelCoord> px;
        const int x0 = std::max(0, static_cast<int>(std::floor(c.cx - c.radius)));
        const int x1 = std::min(scene.width - 1, static_cast<int>(std::ceil(c.cx + c.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(c.cy - c.radius)));
        const int y1 = std::min(scene.height - 1, static_cast<int>(std::ceil(c.cy + c.radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (inside(c, x, y)) {
                    px.push_back({x, y});
                    out.truth.labels[static_cast<std::size_t>(y) * scene.width + x] = static_cast<std::int32_t>(i + 1);
                }
            }
        }
        if (px.empty()) {
            throw Error("synth: particle " + std::to_string(i + 1) + " covers no pixel");
        }
        out.truth.regions.push_back(make_region(static_cast<int>(i + 1), std::move(px)));
        out.truth_labels.push_back(c.spec->class_name);
    }

    // Rendering.
    const double cxf = 0.5 * (scene.width - 1), cyf = 0.5 * (scene.height - 1);
    const double rmax2 = cxf * cxf + cyf * cyf;
    auto vignette = [&](int x, int y) {
        if (scene.vignette_strength == 0.0 || rmax2 == 0.0) return 1.0;
        const double dx = x - cxf, dy = y - cyf;
        return 1.0 - scene.vignette_strength * (dx * dx + dy * dy) / rmax2;
    };

    out.stack.width = scene.width;
    out.stack.height = scene.height;
    for (std::size_t cond = 0; cond < m; ++cond) {
        std::seed_seq seq{static_cast<std::uint32_t>(scene.rng_seed), static_cast<std::uint32_t>(scene.rng_seed >> 32),
                          static_cast<std::uint32_t>(cond), 0x5eedu};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> gauss(0.0, 1.0);

        RgbImage img(scene.width, scene.height);
        for (int y = 0; y < scene.height; ++y) {
            for (int x = 0; x < scene.width; ++x) {
                const double f = vignette(x, y);
                const std::int32_t l = out.truth.labels[static_cast<std::size_t>(y) * scene.width + x];
                HsvPixel hsv;
                if (l == 0) {
                    hsv = {0.0, 0.0, scene.background_v * f};
                } else {
                    const auto* spec = by_name.at(out.truth_labels[l - 1]);
                    const HsvPixel base = spec->per_condition_hsv[cond];
                    hsv = base;
                    if (spec->noise.h_deg > 0) hsv.h += spec->noise.h_deg * gauss(rng);
                    if (spec->noise.s > 0) hsv.s += spec->noise.s * gauss(rng);
                    if (spec->noise.v > 0) hsv.v += spec->noise.v * gauss(rng);
                    hsv.s = std::clamp(hsv.s, 0.0, 1.0);
                    hsv.v = std::clamp(hsv.v, 0.0, 1.0) * f;
                }
                img.set(x, y, hsv_to_rgb(hsv));
            }
        }
        out.stack.images.push_back(std::move(img));
        out.stack.high_ev.emplace_back(std::nullopt);
    }
    out.stack.registration_offsets.assign(m, Offset{});
    return out;
}

std::vector<SynthClassSpec> spaced_hue_classes(int count, const StackManifest& manifest, HsvNoise noise,
                                               std::uint64_t seed, double hue_spacing_deg) {
    if (count < 1) throw Error("synth: class count must be positive");
    if (count * hue_spacing_deg > 360.0 + 1e-9) {
        throw Error("synth: hue spacing too wide for the class count");
    }
    const std::size_t m = manifest.condition_count();
    const std::size_t mask = manifest.mask_position();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(0.0, 360.0);
    std::uniform_real_distribution<double> sat(0.45, 0.8);
    std::uniform_real_distribution<double> val(0.6, 0.95);

    std::vector<double> condition_shift(m);
    for (auto& s : condition_shift) s = shift(rng);

    std::vector<SynthClassSpec> out;
    for (int i = 0; i < count; ++i) {
        SynthClassSpec c;
        char name[16];
        std::snprintf(name, sizeof name, "C%02d", i + 1);
        c.class_name = name;
        c.noise = noise;
        for (std::size_t cond = 0; cond < m; ++cond) {
            HsvPixel p;
            p.h = std::fmod(condition_shift[cond] + i * hue_spacing_deg, 360.0);
            if (cond == mask) {
                p.s = 0.25;
                p.v = 0.95;
            } else {
                p.s = sat(rng);
                p.v = val(rng);
            }
            c.per_condition_hsv.push_back(p);
        }
        out.push_back(std::move(c));
    }
    return out;
}

SynthSceneSpec random_disk_scene(int width, int height, std::span<const SynthClassSpec> classes, int per_class,
                                 double r_min, double r_max, std::uint64_t seed) {
    SynthSceneSpec scene;
    scene.width = width;
    scene.height = height;
    scene.rng_seed = seed;
    std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
    std::uniform_real_distribution<double> radius(r_min, r_max);
    for (int k = 0; k < per_class; ++k) {
        for (const auto& c : classes) {
            SynthParticle p;
            p.class_name = c.class_name;
            p.size_a = radius(rng);
            scene.particles.push_back(std::move(p));
        }
    }
    return scene;
}

StackManifest synthetic_manifest(const std::filesystem::path& dir, std::string name, std::string_view prefix) {
    StackManifest m;
    m.name = std::move(name);
    m.conditions = canonical_conditions();
    for (auto& c : m.conditions) {
        char file[64];
        std::snprintf(file, sizeof file, "%.*s%02d.png", static_cast<int>(prefix.size()), prefix.data(), c.index);
        c.image_path = dir / file;
    }
    m.validate();
    return m;
}

namespace {

json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw Error(std::string("cannot open ") + what + " " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(std::string(what) + " parse failure: " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc, const char* what) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(std::string("cannot write ") + what + " " + path.string());
    out << doc.dump(2) << '\n';
}

} // namespace

SynthSceneSpec load_scene_spec(const std::filesystem::path& path) {
    const json doc = read_json_file(path, "scene spec");
    SynthSceneSpec s;
    try {
        s.width = doc.at("width").get<int>();
        s.height = doc.at("height").get<int>();
        s.background_v = doc.value("background_v", s.background_v);
        s.rng_seed = doc.value("rng_seed", s.rng_seed);
        s.vignette_strength = doc.value("vignette_strength", s.vignette_strength);
        s.min_gap_px = doc.value("min_gap_px", s.min_gap_px);
        s.max_placement_attempts = doc.value("max_placement_attempts", s.max_placement_attempts);
        for (const auto& e : doc.at("particles")) {
            SynthParticle p;
            p.class_name = e.at("class").get<std::string>();
            p.shape = parse_shape_kind(e.value("shape", std::string("disk")));
            if (e.contains("center")) {
                const auto c = e["center"].get<std::vector<double>>();
                if (c.size() != 2) throw Error("scene spec: center needs two coordinates");
                p.center = std::array<double, 2>{c[0], c[1]};
            }
            const auto size = e.at("size").get<std::vector<double>>();
            if (size.empty() || size.size() > 2) throw Error("scene spec: size needs one or two values");
            p.size_a = size[0];
            p.size_b = size.size() > 1 ? size[1] : 0.0;
            p.angle_deg = e.value("angle_deg", 0.0);
            s.particles.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("scene spec parse failure: ") + e.what());
    }
    validate_scene(s);
    return s;
}

void save_scene_spec(const SynthSceneSpec& s, const std::filesystem::path& path) {
    json doc;
    doc["width"] = s.width;
    doc["height"] = s.height;
    doc["background_v"] = s.background_v;
    doc["rng_seed"] = s.rng_seed;
    doc["vignette_strength"] = s.vignette_strength;
    doc["min_gap_px"] = s.min_gap_px;
    doc["max_placement_attempts"] = s.max_placement_attempts;
    doc["particles"] = json::array();
    for (const auto& p : s.particles) {
        json e;
        e["class"] = p.class_name;
        e["shape"] = std::string(to_string(p.shape));
        if (p.center) e["center"] = {(*p.center)[0], (*p.center)[1]};
        e["size"] = p.size_b > 0.0 ? json{p.size_a, p.size_b} : json{p.size_a};
        e["angle_deg"] = p.angle_deg;
        doc["particles"].push_back(std::move(e));
    }
    write_json_file(path, doc, "scene spec");
}

std::vector<SynthClassSpec> load_class_specs(const std::filesystem::path& path) {
    const json doc = read_json_file(path, "class specs");
    std::vector<SynthClassSpec> out;
    try {
        for (const auto& e : doc.at("classes")) {
            SynthClassSpec c;
            c.class_name = e.at("name").get<std::string>();
            for (const auto& hsv : e.at("hsv")) {
                const auto v = hsv.get<std::vector<double>>();
                if (v.size() != 3) throw Error("class specs: each color needs h, s, v");
                c.per_condition_hsv.push_back({v[0], v[1], v[2]});
            }
            if (e.contains("noise")) {
                const auto n = e["noise"].get<std::vector<double>>();
                if (n.size() != 3) throw Error("class specs: noise needs sigma_h, sigma_s, sigma_v");
                c.noise = {n[0], n[1], n[2]};
            }
            out.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("class specs parse failure: ") + e.what());
    }
    return out;
}

void save_class_specs(std::span<const SynthClassSpec> classes, const std::filesystem::path& path) {
    json doc;
    doc["classes"] = json::array();
    for (const auto& c : classes) {
        json e;
        e["name"] = c.class_name;
        e["hsv"] = json::array();
        for (const auto& p : c.per_condition_hsv) e["hsv"].push_back({p.h, p.s, p.v});
        e["noise"] = {c.noise.h_deg, c.noise.s, c.noise.v};
        doc["classes"].push_back(std::move(e));
    }
    write_json_file(path, doc, "class specs");
}

} // namespace fimap
