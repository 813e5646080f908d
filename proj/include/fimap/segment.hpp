#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fimap/image.hpp"

namespace fimap {

enum class FeatureSpace { ycbcr, rgb };

// How the particle class is picked from the k cluster centroids.
//   brightest        the single cluster with the highest luma.
//   luminance_split  every cluster on the bright side of the best two-group
//                    split of the centroid lumas (see select_particle_clusters).
enum class ClusterSelection { brightest, luminance_split };

std::string_view to_string(FeatureSpace f);
FeatureSpace parse_feature_space(std::string_view s);
std::string_view to_string(ClusterSelection c);
ClusterSelection parse_cluster_selection(std::string_view s);

struct SegmentationConfig {
    int k = 3;
    int max_iterations = 300;
    double convergence_tol = 1e-4;  // max centroid movement, channel units
    std::uint64_t rng_seed = 42;
    int min_area_px = 9;
    FeatureSpace feature_space = FeatureSpace::ycbcr;
    bool fill_holes = true;
    ClusterSelection selection = ClusterSelection::luminance_split;
    // Centroids are estimated on at most this many pixels; every pixel is
    // then assigned to its nearest centroid.
    std::size_t max_sample_pixels = 200'000;

    void validate() const;

    /// k = 4, for samples with residue on the filter.
    static SegmentationConfig turbid();
    /// 100 px minimum area, for cryoground particles.
    static SegmentationConfig small_particles();
};

using Feature3 = std::array<double, 3>;

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<Feature3> centroids;
    double sse = 0.0;
    int iterations = 0;
    bool converged = false;
    // SSE after every assignment step, initial assignment first.
    std::vector<double> sse_history;
};

/// Lloyd's algorithm from a k-means++ start seeded by cfg.rng_seed. Ties in
/// assignment go to the lowest cluster id; a cluster left empty is moved to
/// the point farthest from its current centroid. Throws if pixels.size() < k.
KMeansResult kmeans_cluster(std::span<const Feature3> pixels, int k, const SegmentationConfig& cfg);

int nearest_centroid(const Feature3& p, std::span<const Feature3> centroids);

/// Index of the centroid with the highest Y; ties go to the lowest index.
int select_particle_cluster(std::span<const Feature3> ycbcr_centroids);

/// Sorted indices of the clusters whose Y lies above the split of the
/// centroid Y values into two groups with least within-group sum of squares.
/// Always contains select_particle_cluster(); equals it alone whenever the
/// brightest centroid is isolated from the rest.
std::vector<int> select_particle_clusters(std::span<const Feature3> ycbcr_centroids);

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    /// 0/255 raster for export.
    std::vector<std::uint8_t> to_gray8() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

std::vector<Feature3> to_features(const RgbImage& image, FeatureSpace space);

/// Segments the particle class of `image`; the high-EV companion, when
/// given, is segmented the same way and OR-ed in before hole filling.
BinaryMask build_mask(const RgbImage& image, const SegmentationConfig& cfg,
                      const RgbImage* high_ev_image = nullptr);

/// Sets every background pixel not 4-connected to the raster border.
void fill_holes(BinaryMask& mask);

struct PixelCoord {
    int x = 0;
    int y = 0;

    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Region {
    int id = 0;
    std::size_t area_px = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    BoundingBox bbox;
    // Ellipse-equivalent axes: 4 * sqrt of the eigenvalues of the
    // second central moment matrix of the pixel coordinates.
    double minor_axis_px = 0.0;
    double major_axis_px = 0.0;
    std::vector<PixelCoord> pixels;
};

/// Computes area, centroid, bbox and axes from a pixel list.
Region make_region(int id, std::vector<PixelCoord> pixels);

struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;  // 0 = background
    std::vector<Region> regions;       // regions[i].id == i + 1

    std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    BinaryMask foreground() const;
    std::vector<std::uint16_t> to_gray16() const;
};

/// 8-connected components of `mask`, dropping those smaller than
/// min_area_px, numbered 1..n in raster order of their first pixel.
LabelMap label_regions(const BinaryMask& mask, int min_area_px);

/// Rebuilds a LabelMap from a label raster; ids must be 1..n without gaps.
LabelMap label_map_from_raster(int width, int height, std::span<const std::uint16_t> labels);

double px_area_to_um2(double area_px, double scale_um_per_px);

} // namespace fimap
