#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fimap/classify.hpp"
#include "fimap/metrics.hpp"
#include "fimap/segment.hpp"

namespace fimap {

/// Plain comma-separated table with a header row. Fields never contain
/// commas or quotes; writers reject names that would.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws when absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

std::string format_double(double v, int precision = 6);

// region_id, area_px, area_um2, centroid_x, centroid_y, minor_axis_px,
// minor_axis_um, major_axis_px, bbox_x0, bbox_y0, bbox_x1, bbox_y1
CsvTable region_table(const LabelMap& labels, double scale_um_per_px);

// region_id, centroid_x, centroid_y, assigned_class, min_distance,
// threshold_used, then one distance column per library class.
CsvTable classification_table(std::span<const ClassificationResult> results, const LabelMap& labels);

// region_id, centroid_x, centroid_y, area_px, label
CsvTable truth_table(const LabelMap& truth, std::span<const std::string> truth_labels);

/// Square matrix with a leading class column.
CsvTable distance_table(const DistanceMatrix& dm);
CsvTable confusable_pair_table(std::span<const ConfusablePair> pairs);

// particle, reference, mask_area_px, reference_area_px, iou, roi_percent
CsvTable area_iou_table(std::span<const AreaIouRow> rows);

/// Rows of `particle, reference, mask_area_px, area_1, ..., area_m`; the
/// per-condition columns are every column after mask_area_px.
std::vector<AreaSeries> area_series_from_table(const CsvTable& table);

/// Centroids and labels from a classification or truth table (the label
/// column is `assigned_class` or `label`).
std::vector<LabeledParticle> labeled_particles_from_table(const CsvTable& table);

} // namespace fimap
