#include "fimap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "fimap/error.hpp"

namespace fimap {

std::string_view to_string(ReferenceMethod m) {
    return m == ReferenceMethod::median ? "median" : "q1";
}

ReferenceMethod parse_reference_method(std::string_view s) {
    if (s == "median") return ReferenceMethod::median;
    if (s == "q1" || s == "first_quartile") return ReferenceMethod::first_quartile;
    throw Error("unknown reference method '" + std::string(s) + "'");
}

double reference_area(std::span<const double> areas, ReferenceMethod method) {
    if (areas.empty()) {
        throw Error("reference_area: empty list");
    }
    std::vector<double> v(areas.begin(), areas.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (method == ReferenceMethod::median) {
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    const double rank = (static_cast<double>(n) + 1.0) / 4.0;  // 1-based
    if (rank <= 1.0) return v.front();
    if (rank >= static_cast<double>(n)) return v.back();
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    return v[lo - 1] + frac * (v[lo] - v[lo - 1]);
}

double area_ratio_iou(double mask_area, double ref) {
    if (!(mask_area > 0.0) || !(ref > 0.0)) {
        throw Error("area_ratio_iou: areas must be positive");
    }
    return std::min(mask_area, ref) / std::max(mask_area, ref);
}

double roi_percentage(double mask_area, double ref) {
    if (!(ref > 0.0)) {
        throw Error("roi_percentage: reference area must be positive");
    }
    return 100.0 * mask_area / ref;
}

AreaIouRow evaluate_area_series(const AreaSeries& s) {
    AreaIouRow row;
    row.particle_name = s.particle_name;
    row.reference_method = s.reference_method;
    row.mask_area_px = s.mask_area_px;
    row.reference_area_px = reference_area(s.condition_areas_px, s.reference_method);
    row.iou = area_ratio_iou(s.mask_area_px, row.reference_area_px);
    row.roi_percent = roi_percentage(s.mask_area_px, row.reference_area_px);
    return row;
}

ConfusionCounts detection_confusion(std::span<const LabeledParticle> predicted,
                                    std::span<const LabeledParticle> truth, const MatchOptions& opts) {
    auto non_mp = [&](const std::string& label) {
        return std::find(opts.non_mp_labels.begin(), opts.non_mp_labels.end(), label) != opts.non_mp_labels.end();
    };

    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    const double r2 = opts.match_radius_px * opts.match_radius_px;
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        for (std::size_t t = 0; t < truth.size(); ++t) {
            const double dx = predicted[p].centroid_x - truth[t].centroid_x;
            const double dy = predicted[p].centroid_y - truth[t].centroid_y;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= r2) candidates.emplace_back(d2, p, t);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    std::vector<bool> p_used(predicted.size(), false), t_used(truth.size(), false);
    ConfusionCounts c;
    for (const auto& [d2, p, t] : candidates) {
        if (p_used[p] || t_used[t]) continue;
        p_used[p] = t_used[t] = true;
        const auto& pl = predicted[p].label;
        const auto& tl = truth[t].label;
        if (non_mp(pl) && non_mp(tl)) ++c.tn;
        else if (pl == tl) ++c.tp;
        else ++c.fp;
    }
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!t_used[t] && !non_mp(truth[t].label)) ++c.fn;
    }
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        if (!p_used[p] && !non_mp(predicted[p].label)) ++c.fp;
    }
    return c;
}

Scores scores(const ConfusionCounts& c) {
    auto ratio = [](double num, double den) -> std::optional<double> {
        if (den == 0.0) return std::nullopt;
        return num / den;
    };
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    Scores s;
    s.iou = ratio(tp, tp + fn + fp);
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    if (s.precision && s.recall) {
        // Harmonic mean of precision and recall, written so tp = 0 gives 0.
        s.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    }
    return s;
}

std::map<int, std::size_t> size_category_counts(std::span<const Region> regions, std::span<const int> thresholds_px2) {
    std::map<int, std::size_t> out;
    for (std::size_t i = 0; i < thresholds_px2.size(); ++i) {
        if (thresholds_px2[i] <= 0) {
            throw Error("size thresholds must be positive");
        }
        if (i > 0 && thresholds_px2[i] <= thresholds_px2[i - 1]) {
            throw Error("size thresholds must be ascending");
        }
        out[thresholds_px2[i]] = 0;
    }
    for (const auto& r : regions) {
        for (int t : thresholds_px2) {
            if (r.area_px >= static_cast<std::size_t>(t)) ++out[t];
        }
    }
    return out;
}

} // namespace fimap
