#include "fimap/segment.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <ranges>

#include "fimap/error.hpp"

namespace fimap {

std::string_view to_string(FeatureSpace f) {
    return f == FeatureSpace::ycbcr ? "ycbcr" : "rgb";
}

FeatureSpace parse_feature_space(std::string_view s) {
    if (s == "ycbcr") return FeatureSpace::ycbcr;
    if (s == "rgb") return FeatureSpace::rgb;
    throw Error("unknown feature space '" + std::string(s) + "'");
}

std::string_view to_string(ClusterSelection c) {
    return c == ClusterSelection::brightest ? "brightest" : "luminance_split";
}

ClusterSelection parse_cluster_selection(std::string_view s) {
    if (s == "brightest") return ClusterSelection::brightest;
    if (s == "luminance_split") return ClusterSelection::luminance_split;
    throw Error("unknown cluster selection '" + std::string(s) + "'");
}

void SegmentationConfig::validate() const {
    if (k < 2) throw Error("segmentation: k must be at least 2");
    if (min_area_px < 1) throw Error("segmentation: min_area_px must be at least 1");
    if (max_iterations < 1) throw Error("segmentation: max_iterations must be positive");
    if (!(convergence_tol >= 0.0)) throw Error("segmentation: convergence_tol must be nonnegative");
    if (max_sample_pixels < static_cast<std::size_t>(k)) {
        throw Error("segmentation: max_sample_pixels must be at least k");
    }
}

SegmentationConfig SegmentationConfig::turbid() {
    SegmentationConfig c;
    c.k = 4;
    return c;
}

SegmentationConfig SegmentationConfig::small_particles() {
    SegmentationConfig c;
    c.min_area_px = 100;
    return c;
}

namespace {

double dist2(const Feature3& a, const Feature3& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

Feature3 feature_of(RgbPixel p, FeatureSpace space) {
    if (space == FeatureSpace::rgb) {
        return {double(p.r), double(p.g), double(p.b)};
    }
    const auto c = rgb_to_ycbcr(p);
    return {c.y, c.cb, c.cr};
}

std::vector<Feature3> kmeanspp_init(std::span<const Feature3> pts, int k, std::mt19937_64& rng) {
    const std::size_t n = pts.size();
    std::vector<Feature3> centroids;
    centroids.reserve(k);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centroids.push_back(pts[pick(rng)]);

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        d2[i] = dist2(pts[i], centroids[0]);
    }
    while (static_cast<int>(centroids.size()) < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = pick(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            const double r = u(rng);
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > r && d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.push_back(pts[chosen]);
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], dist2(pts[i], centroids.back()));
        }
    }
    return centroids;
}

} // namespace

int nearest_centroid(const Feature3& p, std::span<const Feature3> centroids) {
    int best = 0;
    double best_d = dist2(p, centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double d = dist2(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

KMeansResult kmeans_cluster(std::span<const Feature3> pixels, int k, const SegmentationConfig& cfg) {
    if (k < 1) {
        throw Error("kmeans: k must be positive");
    }
    if (pixels.size() < static_cast<std::size_t>(k)) {
        throw Error("kmeans: fewer pixels (" + std::to_string(pixels.size()) + ") than clusters (" +
                    std::to_string(k) + ")");
    }
    const std::size_t n = pixels.size();
    std::mt19937_64 rng(cfg.rng_seed);

    KMeansResult res;
    res.centroids = kmeanspp_init(pixels, k, rng);
    res.assignments.assign(n, 0);
    std::vector<double> point_d2(n);

    auto assign = [&] {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = nearest_centroid(pixels[i], res.centroids);
            res.assignments[i] = c;
            point_d2[i] = dist2(pixels[i], res.centroids[c]);
            sse += point_d2[i];
        }
        res.sse = sse;
        // Lloyd steps never increase the objective; allow for summation noise.
        assert(res.sse_history.empty() ||
               sse <= res.sse_history.back() * (1.0 + 1e-12) + 1e-9);
        res.sse_history.push_back(sse);
    };

    assign();
    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::vector<Feature3> sums(k, Feature3{0.0, 0.0, 0.0});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[res.assignments[i]];
            s[0] += pixels[i][0];
            s[1] += pixels[i][1];
            s[2] += pixels[i][2];
            ++counts[res.assignments[i]];
        }

        std::vector<Feature3> next(k);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                const double inv = 1.0 / static_cast<double>(counts[c]);
                next[c] = {sums[c][0] * inv, sums[c][1] * inv, sums[c][2] * inv};
            } else {
                // Empty: take the worst-served point, and stop it being picked twice.
                const auto far = static_cast<std::size_t>(
                    std::max_element(point_d2.begin(), point_d2.end()) - point_d2.begin());
                next[c] = pixels[far];
                point_d2[far] = -1.0;
            }
        }

        double movement = 0.0;
        for (int c = 0; c < k; ++c) {
            movement = std::max(movement, std::sqrt(dist2(next[c], res.centroids[c])));
        }
        res.centroids = std::move(next);
        res.iterations = it + 1;
        assign();
        if (movement < cfg.convergence_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

int select_particle_cluster(std::span<const Feature3> ycbcr_centroids) {
    if (ycbcr_centroids.empty()) {
        throw Error("select_particle_cluster: no centroids");
    }
    int best = 0;
    for (std::size_t c = 1; c < ycbcr_centroids.size(); ++c) {
        if (ycbcr_centroids[c][0] > ycbcr_centroids[best][0]) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

std::vector<int> select_particle_clusters(std::span<const Feature3> ycbcr_centroids) {
    const int k = static_cast<int>(ycbcr_centroids.size());
    if (k == 0) {
        throw Error("select_particle_clusters: no centroids");
    }
    // Ascending luma; among equal luma the lowest index sorts last so that it
    // joins the bright group first.
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ya = ycbcr_centroids[a][0], yb = ycbcr_centroids[b][0];
        return ya != yb ? ya < yb : a > b;
    });

    auto group_sse = [&](int lo, int hi) {
        double mean = 0.0;
        for (int i = lo; i < hi; ++i) mean += ycbcr_centroids[order[i]][0];
        mean /= (hi - lo);
        double s = 0.0;
        for (int i = lo; i < hi; ++i) {
            const double d = ycbcr_centroids[order[i]][0] - mean;
            s += d * d;
        }
        return s;
    };

    int split = k - 1;
    if (k > 1) {
        double best = std::numeric_limits<double>::infinity();
        for (int s = k - 1; s >= 1; --s) {
            const double cost = group_sse(0, s) + group_sse(s, k);
            if (cost < best - 1e-12) {
                best = cost;
                split = s;
            }
        }
    } else {
        split = 0;
    }
    std::vector<int> bright(order.begin() + split, order.end());
    std::sort(bright.begin(), bright.end());
    return bright;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> BinaryMask::to_gray8() const {
    std::vector<std::uint8_t> out(bits.size());
    std::transform(bits.begin(), bits.end(), out.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
    return out;
}

std::vector<Feature3> to_features(const RgbImage& image, FeatureSpace space) {
    std::vector<Feature3> out;
    out.reserve(image.pixel_count());
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            out.push_back(feature_of(image.at(x, y), space));
        }
    }
    return out;
}

namespace {

void segment_into(const RgbImage& image, const SegmentationConfig& cfg, BinaryMask& mask) {
    const std::size_t n = image.pixel_count();
    if (n < static_cast<std::size_t>(cfg.k)) {
        throw Error("build_mask: image has fewer pixels than clusters");
    }
    auto feature_at = [&](std::size_t i) {
        const std::size_t j = 3 * i;
        return feature_of({image.data[j], image.data[j + 1], image.data[j + 2]}, cfg.feature_space);
    };

    std::vector<Feature3> sample;
    if (n <= cfg.max_sample_pixels) {
        sample.reserve(n);
        for (std::size_t i = 0; i < n; ++i) sample.push_back(feature_at(i));
    } else {
        std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> idx;
        idx.reserve(cfg.max_sample_pixels);
        std::ranges::sample(all, std::back_inserter(idx), static_cast<std::ptrdiff_t>(cfg.max_sample_pixels), rng);
        sample.reserve(idx.size());
        for (auto i : idx) sample.push_back(feature_at(i));
    }

    const auto km = kmeans_cluster(sample, cfg.k, cfg);

    std::vector<Feature3> ycc = km.centroids;
    if (cfg.feature_space == FeatureSpace::rgb) {
        for (auto& c : ycc) {
            const auto v = rgb_to_ycbcr(c[0], c[1], c[2]);
            c = {v.y, v.cb, v.cr};
        }
    }
    std::vector<std::uint8_t> is_particle(cfg.k, 0);
    if (cfg.selection == ClusterSelection::brightest) {
        is_particle[select_particle_cluster(ycc)] = 1;
    } else {
        for (int c : select_particle_clusters(ycc)) is_particle[c] = 1;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (is_particle[nearest_centroid(feature_at(i), km.centroids)]) {
            mask.bits[i] = 1;
        }
    }
}

} // namespace

BinaryMask build_mask(const RgbImage& image, const SegmentationConfig& cfg, const RgbImage* high_ev_image) {
    cfg.validate();
    if (image.empty()) {
        throw Error("build_mask: empty image");
    }
    if (high_ev_image && (high_ev_image->width != image.width || high_ev_image->height != image.height)) {
        throw Error("build_mask: dimension mismatch with high-EV image");
    }
    BinaryMask mask(image.width, image.height);
    segment_into(image, cfg, mask);
    if (high_ev_image) {
        segment_into(*high_ev_image, cfg, mask);
    }
    if (cfg.fill_holes) {
        fill_holes(mask);
    }
    return mask;
}

void fill_holes(BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    if (w == 0 || h == 0) return;
    std::vector<std::uint8_t> outside(mask.bits.size(), 0);
    std::vector<std::size_t> stack;
    auto push = [&](int x, int y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!mask.bits[i] && !outside[i]) {
            outside[i] = 1;
            stack.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        push(x, 0);
        push(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        push(0, y);
        push(w - 1, y);
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        if (x > 0) push(x - 1, y);
        if (x + 1 < w) push(x + 1, y);
        if (y > 0) push(x, y - 1);
        if (y + 1 < h) push(x, y + 1);
    }
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (!outside[i]) mask.bits[i] = 1;
    }
}

Region make_region(int id, std::vector<PixelCoord> pixels) {
    Region r;
    r.id = id;
    r.area_px = pixels.size();
    if (pixels.empty()) {
        r.pixels = std::move(pixels);
        return r;
    }
    r.bbox = {pixels[0].x, pixels[0].y, pixels[0].x, pixels[0].y};
    double sx = 0.0, sy = 0.0;
    for (const auto& p : pixels) {
        sx += p.x;
        sy += p.y;
        r.bbox.x0 = std::min(r.bbox.x0, p.x);
        r.bbox.y0 = std::min(r.bbox.y0, p.y);
        r.bbox.x1 = std::max(r.bbox.x1, p.x);
        r.bbox.y1 = std::max(r.bbox.y1, p.y);
    }
    const double n = static_cast<double>(pixels.size());
    r.centroid_x = sx / n;
    r.centroid_y = sy / n;

    double mxx = 0.0, myy = 0.0, mxy = 0.0;
    for (const auto& p : pixels) {
        const double dx = p.x - r.centroid_x, dy = p.y - r.centroid_y;
        mxx += dx * dx;
        myy += dy * dy;
        mxy += dx * dy;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    const double mid = 0.5 * (mxx + myy);
    const double rad = std::sqrt(0.25 * (mxx - myy) * (mxx - myy) + mxy * mxy);
    r.major_axis_px = 4.0 * std::sqrt(std::max(mid + rad, 0.0));
    r.minor_axis_px = 4.0 * std::sqrt(std::max(mid - rad, 0.0));
    r.pixels = std::move(pixels);
    return r;
}

BinaryMask LabelMap::foreground() const {
    BinaryMask m(width, height);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        m.bits[i] = labels[i] != 0 ? 1 : 0;
    }
    return m;
}

std::vector<std::uint16_t> LabelMap::to_gray16() const {
    if (regions.size() > 65535) {
        throw Error("label map has more than 65535 regions; cannot export as 16-bit");
    }
    std::vector<std::uint16_t> out(labels.size());
    std::transform(labels.begin(), labels.end(), out.begin(),
                   [](std::int32_t l) { return static_cast<std::uint16_t>(l); });
    return out;
}

namespace {

struct DisjointSet {
    std::vector<std::int32_t> parent;

    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace

LabelMap label_regions(const BinaryMask& mask, int min_area_px) {
    const int w = mask.width, h = mask.height;
    LabelMap out;
    out.width = w;
    out.height = h;
    out.labels.assign(mask.bits.size(), 0);

    // First pass: provisional labels (1-based; 0 = background).
    std::vector<std::int32_t> prov(mask.bits.size(), 0);
    DisjointSet ds;
    ds.make();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!mask.bits[i]) continue;
            std::int32_t label = 0;
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || nx >= w || ny < 0) return;
                const std::int32_t l = prov[static_cast<std::size_t>(ny) * w + nx];
                if (l == 0) return;
                if (label == 0) label = l;
                else ds.unite(label, l);
            };
            visit(x - 1, y);
            visit(x - 1, y - 1);
            visit(x, y - 1);
            visit(x + 1, y - 1);
            prov[i] = label != 0 ? label : ds.make();
        }
    }

    // Gather pixels per root in raster order.
    std::vector<std::int32_t> root_slot(ds.parent.size(), -1);
    std::vector<std::vector<PixelCoord>> groups;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (prov[i] == 0) continue;
            const std::int32_t root = ds.find(prov[i]);
            if (root_slot[root] < 0) {
                root_slot[root] = static_cast<std::int32_t>(groups.size());
                groups.emplace_back();
            }
            groups[root_slot[root]].push_back({x, y});
        }
    }

    for (auto& g : groups) {
        if (g.size() < static_cast<std::size_t>(std::max(min_area_px, 1))) continue;
        const int id = static_cast<int>(out.regions.size()) + 1;
        for (const auto& p : g) {
            out.labels[static_cast<std::size_t>(p.y) * w + p.x] = id;
        }
        out.regions.push_back(make_region(id, std::move(g)));
    }
    return out;
}

LabelMap label_map_from_raster(int width, int height, std::span<const std::uint16_t> labels) {
    if (labels.size() != static_cast<std::size_t>(width) * height) {
        throw Error("label raster size does not match dimensions");
    }
    LabelMap out;
    out.width = width;
    out.height = height;
    out.labels.assign(labels.begin(), labels.end());
    const int max_id = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    std::vector<std::vector<PixelCoord>> groups(max_id);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int l = labels[static_cast<std::size_t>(y) * width + x];
            if (l > 0) groups[l - 1].push_back({x, y});
        }
    }
    for (int id = 1; id <= max_id; ++id) {
        if (groups[id - 1].empty()) {
            throw Error("label raster has a gap at id " + std::to_string(id));
        }
        out.regions.push_back(make_region(id, std::move(groups[id - 1])));
    }
    return out;
}

double px_area_to_um2(double area_px, double scale_um_per_px) {
    if (!(scale_um_per_px > 0.0)) {
        throw Error("pixel scale must be positive");
    }
    return area_px * scale_um_per_px * scale_um_per_px;
}

} // namespace fimap
