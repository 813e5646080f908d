#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fimap/segment.hpp"

namespace fimap {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

enum class ReferenceMethod { median, first_quartile };

std::string_view to_string(ReferenceMethod m);
ReferenceMethod parse_reference_method(std::string_view s);  // "median", "q1", "first_quartile"

/// Median: mean of the two middle order statistics for even n.
/// First quartile: linear interpolation at 1-based rank (n + 1) / 4, clamped
/// to the sample range. Throws on an empty list.
double reference_area(std::span<const double> areas, ReferenceMethod method);

/// min(a, b) / max(a, b). Throws unless both are positive.
double area_ratio_iou(double mask_area, double reference_area);

/// 100 * mask_area / reference_area. Throws unless the reference is positive.
double roi_percentage(double mask_area, double reference_area);

/// One particle's mask area next to its per-condition areas.
struct AreaSeries {
    std::string particle_name;
    double mask_area_px = 0.0;
    std::vector<double> condition_areas_px;
    ReferenceMethod reference_method = ReferenceMethod::median;
};

struct AreaIouRow {
    std::string particle_name;
    ReferenceMethod reference_method = ReferenceMethod::median;
    double mask_area_px = 0.0;
    double reference_area_px = 0.0;
    double iou = 0.0;
    double roi_percent = 0.0;
};

AreaIouRow evaluate_area_series(const AreaSeries& series);

struct LabeledParticle {
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    std::string label;
};

struct MatchOptions {
    double match_radius_px = 50.0;
    // Labels meaning "not a microplastic".
    std::vector<std::string> non_mp_labels{"UNCLASSIFIED", "NOM"};
};

// Greedy nearest-first centroid matching within the radius. A matched pair
// counts TN when both sides are non-MP, TP when the labels agree, FP
// otherwise. Unmatched MP truth counts FN; unmatched MP predictions count
// FP. Unmatched non-MP entries on either side are not counted.
ConfusionCounts detection_confusion(std::span<const LabeledParticle> predicted,
                                    std::span<const LabeledParticle> truth, const MatchOptions& opts = {});

/// Each score is empty where its denominator is zero.
struct Scores {
    std::optional<double> iou;
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

Scores scores(const ConfusionCounts& c);

/// For each threshold t, the number of regions with area_px >= t.
std::map<int, std::size_t> size_category_counts(std::span<const Region> regions, std::span<const int> thresholds_px2);

} // namespace fimap
