#include <cmath>
#include <queue>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fimap/error.hpp"
#include "fimap/segment.hpp"

using namespace fimap;

namespace {

Feature3 y_only(double y) { return {y, 128.0, 128.0}; }

BinaryMask mask_from(const std::vector<std::string>& rows) {
    BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) m.set(x, y, rows[y][x] == '#');
    }
    return m;
}

// Breadth-first 8-connected flood fill; returns component sizes in raster
// order of first pixel.
std::vector<std::size_t> component_sizes(const BinaryMask& m) {
    std::vector<int> seen(m.bits.size(), 0);
    std::vector<std::size_t> sizes;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y) || seen[y * m.width + x]) continue;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            seen[y * m.width + x] = 1;
            std::size_t n = 0;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                ++n;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
                        if (!m.at(nx, ny) || seen[ny * m.width + nx]) continue;
                        seen[ny * m.width + nx] = 1;
                        q.push({nx, ny});
                    }
                }
            }
            sizes.push_back(n);
        }
    }
    return sizes;
}

double sse_of(std::span<const Feature3> pts, const KMeansResult& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& c = r.centroids[r.assignments[i]];
        for (int d = 0; d < 3; ++d) s += (pts[i][d] - c[d]) * (pts[i][d] - c[d]);
    }
    return s;
}

} // namespace

TEST(SegmentationConfig, Presets) {
    SegmentationConfig cfg;
    EXPECT_EQ(cfg.k, 3);
    EXPECT_EQ(cfg.min_area_px, 9);
    EXPECT_EQ(SegmentationConfig::turbid().k, 4);
    EXPECT_EQ(SegmentationConfig::small_particles().min_area_px, 100);
    cfg.k = 1;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.min_area_px = 0;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(KMeans, RecoversSeparatedClusters) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> noise(0.0, 2.0);
    const std::array<Feature3, 3> centers{{{20, 128, 128}, {120, 90, 160}, {220, 140, 100}}};
    std::vector<Feature3> pts;
    std::vector<int> truth;
    for (int i = 0; i < 900; ++i) {
        const int c = i % 3;
        pts.push_back({centers[c][0] + noise(rng), centers[c][1] + noise(rng), centers[c][2] + noise(rng)});
        truth.push_back(c);
    }
    const auto r = kmeans_cluster(pts, 3, SegmentationConfig{});
    EXPECT_TRUE(r.converged);
    // Same partition up to relabeling.
    std::set<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < pts.size(); ++i) pairs.insert({truth[i], r.assignments[i]});
    EXPECT_EQ(pairs.size(), 3u);
    EXPECT_NEAR(r.sse, sse_of(pts, r), 1e-6 * r.sse);
    for (const auto& c : r.centroids) {
        double best = 1e9;
        for (const auto& t : centers) best = std::min(best, std::hypot(c[0] - t[0], c[1] - t[1], c[2] - t[2]));
        EXPECT_LT(best, 1.0);
    }
}

TEST(KMeans, SseNeverIncreases) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 255.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Feature3> pts(200 + trial * 7);
        for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
        SegmentationConfig cfg;
        cfg.rng_seed = trial;
        const auto r = kmeans_cluster(pts, 2 + trial % 5, cfg);
        ASSERT_EQ(r.sse_history.size(), static_cast<std::size_t>(r.iterations) + 1);
        for (std::size_t i = 1; i < r.sse_history.size(); ++i) {
            ASSERT_LE(r.sse_history[i], r.sse_history[i - 1] * (1 + 1e-12));
        }
    }
}

TEST(KMeans, DeterministicForSeed) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 255.0);
    std::vector<Feature3> pts(500);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    const auto a = kmeans_cluster(pts, 4, SegmentationConfig{});
    const auto b = kmeans_cluster(pts, 4, SegmentationConfig{});
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, DuplicatePointsAndErrors) {
    std::vector<Feature3> same(10, Feature3{5, 5, 5});
    const auto r = kmeans_cluster(same, 3, SegmentationConfig{});
    EXPECT_DOUBLE_EQ(r.sse, 0.0);
    std::vector<Feature3> two(2, Feature3{1, 2, 3});
    EXPECT_THROW(kmeans_cluster(two, 3, SegmentationConfig{}), Error);
}

TEST(NearestCentroid, TiesGoToLowestIndex) {
    const std::vector<Feature3> c{{0, 0, 0}, {2, 0, 0}, {2, 0, 0}};
    EXPECT_EQ(nearest_centroid({1, 0, 0}, c), 0);
    EXPECT_EQ(nearest_centroid({2, 0, 0}, c), 1);
}

TEST(ClusterSelection, Brightest) {
    const std::vector<Feature3> a{y_only(20), y_only(180), y_only(60)};
    EXPECT_EQ(select_particle_cluster(a), 1);
    const std::vector<Feature3> b{y_only(15), y_only(200), y_only(55), y_only(110)};
    EXPECT_EQ(select_particle_cluster(b), 1);
    const std::vector<Feature3> tie{y_only(150), y_only(150), y_only(20)};
    EXPECT_EQ(select_particle_cluster(tie), 0);
}

TEST(ClusterSelection, LuminanceSplit) {
    const std::vector<Feature3> a{y_only(20), y_only(180), y_only(60)};
    EXPECT_EQ(select_particle_clusters(a), std::vector<int>{1});
    const std::vector<Feature3> b{y_only(15), y_only(200), y_only(55), y_only(110)};
    EXPECT_EQ(select_particle_clusters(b), std::vector<int>{1});
    // Particle pixels split across two bright clusters.
    const std::vector<Feature3> split{y_only(12), y_only(190), y_only(170)};
    EXPECT_EQ(select_particle_clusters(split), (std::vector<int>{1, 2}));
    const std::vector<Feature3> tie{y_only(150), y_only(150), y_only(20)};
    EXPECT_EQ(select_particle_clusters(tie), (std::vector<int>{0, 1}));

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 255.0);
    for (int t = 0; t < 500; ++t) {
        std::vector<Feature3> c(2 + t % 5);
        for (auto& f : c) f = y_only(u(rng));
        const auto sel = select_particle_clusters(c);
        ASSERT_FALSE(sel.empty());
        ASSERT_NE(std::find(sel.begin(), sel.end(), select_particle_cluster(c)), sel.end());
        double lo = 1e9;
        for (int i : sel) lo = std::min(lo, c[i][0]);
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (std::find(sel.begin(), sel.end(), static_cast<int>(i)) == sel.end()) ASSERT_LT(c[i][0], lo);
        }
    }
}

TEST(FillHoles, FillsEnclosedBackgroundOnly) {
    auto m = mask_from({
        ".......",
        ".#####.",
        ".#...#.",
        ".#.#.#.",
        ".#####.",
        ".....#.",
        "...#.#.",
    });
    fill_holes(m);
    const auto want = mask_from({
        ".......",
        ".#####.",
        ".#####.",
        ".#####.",
        ".#####.",
        ".....#.",
        "...#.#.",
    });
    EXPECT_EQ(m, want);
}

TEST(FillHoles, DiagonalGapDoesNotLeak) {
    // The hole touches the outside only through a diagonal, which 4-connected
    // background flooding does not cross.
    auto m = mask_from({
        "....",
        ".##.",
        ".#.#",
        "..#.",
    });
    fill_holes(m);
    EXPECT_TRUE(m.at(2, 2));
}

TEST(LabelRegions, RasterOrderAndEightConnectivity) {
    const auto m = mask_from({
        "#.....##",
        ".#....##",
        "..#.....",
        "........",
        "...###..",
    });
    const auto lm = label_regions(m, 1);
    ASSERT_EQ(lm.regions.size(), 3u);
    EXPECT_EQ(lm.at(0, 0), 1);
    EXPECT_EQ(lm.at(2, 2), 1);  // diagonal chain
    EXPECT_EQ(lm.at(6, 0), 2);
    EXPECT_EQ(lm.at(3, 4), 3);
    EXPECT_EQ(lm.regions[0].area_px, 3u);
    EXPECT_EQ(lm.regions[1].area_px, 4u);
    EXPECT_EQ(lm.regions[2].area_px, 3u);
    EXPECT_EQ(lm.at(1, 0), 0);
}

TEST(LabelRegions, UShapeMergesLate) {
    const auto m = mask_from({
        "#.#.#",
        "#.#.#",
        "#####",
    });
    const auto lm = label_regions(m, 1);
    ASSERT_EQ(lm.regions.size(), 1u);
    EXPECT_EQ(lm.regions[0].area_px, 11u);
}

TEST(LabelRegions, MinAreaDropsAndRenumbers) {
    const auto m = mask_from({
        "#..###",
        "...###",
        "##.###",
    });
    const auto lm = label_regions(m, 3);
    ASSERT_EQ(lm.regions.size(), 1u);
    EXPECT_EQ(lm.regions[0].id, 1);
    EXPECT_EQ(lm.regions[0].area_px, 9u);
    EXPECT_EQ(lm.at(0, 0), 0);
    EXPECT_EQ(lm.at(4, 1), 1);
}

TEST(LabelRegions, EmptyMask) {
    const BinaryMask m(16, 8);
    const auto lm = label_regions(m, 1);
    EXPECT_TRUE(lm.regions.empty());
}

TEST(LabelRegions, MatchesFloodFillOnRandomMasks) {
    std::mt19937 rng(77);
    std::bernoulli_distribution on(0.45);
    for (int t = 0; t < 50; ++t) {
        BinaryMask m(40 + t, 30);
        for (auto& b : m.bits) b = on(rng);
        const auto lm = label_regions(m, 1);
        const auto sizes = component_sizes(m);
        ASSERT_EQ(lm.regions.size(), sizes.size());
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            ASSERT_EQ(lm.regions[i].area_px, sizes[i]);
            ASSERT_EQ(lm.regions[i].id, static_cast<int>(i) + 1);
        }
        ASSERT_EQ(lm.foreground(), m);
    }
}

TEST(Region, SquareMoments) {
    std::vector<PixelCoord> px;
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 10; ++x) px.push_back({x + 5, y + 7});
    }
    const auto r = make_region(1, px);
    EXPECT_EQ(r.area_px, 100u);
    EXPECT_DOUBLE_EQ(r.centroid_x, 9.5);
    EXPECT_DOUBLE_EQ(r.centroid_y, 11.5);
    EXPECT_EQ(r.bbox, (BoundingBox{5, 7, 14, 16}));
    // Discrete uniform on 10 values has variance (10^2 - 1) / 12.
    const double axis = 4.0 * std::sqrt(99.0 / 12.0);
    EXPECT_NEAR(r.minor_axis_px, axis, 1e-9);
    EXPECT_NEAR(r.major_axis_px, axis, 1e-9);
}

TEST(Region, RotatedLineAxes) {
    std::vector<PixelCoord> px;
    for (int i = 0; i < 21; ++i) px.push_back({i, i});
    const auto r = make_region(1, px);
    // Points spaced sqrt(2) along the diagonal: variance 2 (21^2 - 1) / 12.
    EXPECT_NEAR(r.major_axis_px, 4.0 * std::sqrt(2.0 * 440.0 / 12.0), 1e-9);
    EXPECT_NEAR(r.minor_axis_px, 0.0, 1e-6);
}

TEST(LabelMapRaster, RoundTrip) {
    const auto m = mask_from({
        "##..#",
        "##..#",
        ".....",
        ".###.",
    });
    const auto lm = label_regions(m, 1);
    const auto raster = lm.to_gray16();
    const auto back = label_map_from_raster(lm.width, lm.height, raster);
    EXPECT_EQ(back.labels, lm.labels);
    ASSERT_EQ(back.regions.size(), lm.regions.size());
    for (std::size_t i = 0; i < lm.regions.size(); ++i) {
        EXPECT_EQ(back.regions[i].area_px, lm.regions[i].area_px);
        EXPECT_DOUBLE_EQ(back.regions[i].centroid_x, lm.regions[i].centroid_x);
    }
    std::vector<std::uint16_t> gap{0, 2, 2, 0};
    EXPECT_THROW(label_map_from_raster(2, 2, gap), Error);
    EXPECT_THROW(label_map_from_raster(3, 2, gap), Error);
}

TEST(PixelScale, AreaConversion) {
    EXPECT_NEAR(px_area_to_um2(50, 11.65), 50 * 11.65 * 11.65, 1e-9);
    EXPECT_NEAR(px_area_to_um2(50, 11.65), 6786.125, 1e-9);
    EXPECT_NEAR(px_area_to_um2(100, 11.65), 13572.25, 1e-9);
    EXPECT_THROW(px_area_to_um2(10, 0.0), Error);
}

TEST(BuildMask, TwoToneImageMatchesDrawnShapes) {
    RgbImage img(64, 48, {10, 10, 10});
    BinaryMask want(64, 48);
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) {
            const bool a = (x - 20) * (x - 20) + (y - 20) * (y - 20) <= 64;
            const bool b = x >= 40 && x < 55 && y >= 30 && y < 40;
            if (a) img.set(x, y, {230, 200, 40});
            if (b) img.set(x, y, {60, 220, 240});
            want.set(x, y, a || b);
        }
    }
    for (auto space : {FeatureSpace::ycbcr, FeatureSpace::rgb}) {
        for (auto sel : {ClusterSelection::luminance_split, ClusterSelection::brightest}) {
            SegmentationConfig cfg;
            cfg.feature_space = space;
            cfg.selection = sel;
            cfg.k = sel == ClusterSelection::brightest ? 2 : 3;
            EXPECT_EQ(build_mask(img, cfg), want) << to_string(space) << ' ' << to_string(sel);
        }
    }
}

TEST(BuildMask, HighEvCompanionIsMerged) {
    RgbImage img(40, 40, {5, 5, 5});
    RgbImage high(40, 40, {5, 5, 5});
    for (int y = 5; y < 15; ++y) {
        for (int x = 5; x < 15; ++x) {
            img.set(x, y, {200, 200, 200});
            high.set(x, y, {250, 250, 250});
        }
    }
    // A second particle only visible at the higher exposure.
    for (int y = 25; y < 35; ++y) {
        for (int x = 25; x < 35; ++x) high.set(x, y, {240, 240, 240});
    }
    SegmentationConfig cfg;
    cfg.k = 2;
    EXPECT_EQ(build_mask(img, cfg).count(), 100u);
    EXPECT_EQ(build_mask(img, cfg, &high).count(), 200u);
    RgbImage wrong(10, 10);
    EXPECT_THROW(build_mask(img, cfg, &wrong), Error);
}

TEST(BuildMask, SubsampledCentroidsStillLabelEveryPixel) {
    RgbImage img(200, 200, {8, 8, 8});
    for (int y = 50; y < 150; ++y) {
        for (int x = 60; x < 90; ++x) img.set(x, y, {250, 240, 180});
    }
    SegmentationConfig cfg;
    cfg.max_sample_pixels = 5000;
    EXPECT_EQ(build_mask(img, cfg).count(), 3000u);
}
