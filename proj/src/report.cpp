#include "fimap/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fimap/error.hpp"

namespace fimap {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const char* what) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw Error(std::string("invalid number '") + s + "' in " + what);
    return v;
}

void check_field(const std::string& s) {
    if (s.find_first_of(",\"\n") != std::string::npos) {
        throw Error("csv field '" + s + "' contains a separator or quote");
    }
}

} // namespace

std::size_t CsvTable::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("csv column '" + std::string(name) + "' missing");
    return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        if (first) {
            t.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw Error(path.string() + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                        std::to_string(fields.size()) + " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (first) throw Error(path.string() + ": empty csv");
    return t;
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            check_field(row[i]);
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    };
    emit(table.header);
    for (const auto& r : table.rows) emit(r);
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

CsvTable region_table(const LabelMap& labels, double scale) {
    CsvTable t;
    t.header = {"region_id", "area_px", "area_um2", "centroid_x", "centroid_y", "minor_axis_px", "minor_axis_um",
                "major_axis_px", "bbox_x0", "bbox_y0", "bbox_x1", "bbox_y1"};
    for (const auto& r : labels.regions) {
        t.rows.push_back({std::to_string(r.id), std::to_string(r.area_px),
                          format_double(px_area_to_um2(static_cast<double>(r.area_px), scale), 10),
                          format_double(r.centroid_x, 8), format_double(r.centroid_y, 8),
                          format_double(r.minor_axis_px), format_double(r.minor_axis_px * scale),
                          format_double(r.major_axis_px), std::to_string(r.bbox.x0), std::to_string(r.bbox.y0),
                          std::to_string(r.bbox.x1), std::to_string(r.bbox.y1)});
    }
    return t;
}

CsvTable classification_table(std::span<const ClassificationResult> results, const LabelMap& labels) {
    CsvTable t;
    t.header = {"region_id", "centroid_x", "centroid_y", "assigned_class", "min_distance", "threshold_used"};
    if (!results.empty()) {
        for (const auto& [name, d] : results.front().distances) t.header.push_back("d_" + name);
    }
    for (const auto& r : results) {
        if (r.region_id < 1 || static_cast<std::size_t>(r.region_id) > labels.regions.size()) {
            throw Error("classification for unknown region " + std::to_string(r.region_id));
        }
        const Region& reg = labels.regions[r.region_id - 1];
        std::vector<std::string> row{std::to_string(r.region_id), format_double(reg.centroid_x, 8),
                                     format_double(reg.centroid_y, 8), r.assigned_class,
                                     format_double(r.min_distance()), format_double(r.threshold_used)};
        for (const auto& [name, d] : r.distances) row.push_back(format_double(d));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable truth_table(const LabelMap& truth, std::span<const std::string> truth_labels) {
    if (truth_labels.size() != truth.regions.size()) throw Error("truth labels do not match the truth regions");
    CsvTable t;
    t.header = {"region_id", "centroid_x", "centroid_y", "area_px", "label"};
    for (std::size_t i = 0; i < truth.regions.size(); ++i) {
        const auto& r = truth.regions[i];
        t.rows.push_back({std::to_string(r.id), format_double(r.centroid_x, 8), format_double(r.centroid_y, 8),
                          std::to_string(r.area_px), truth_labels[i]});
    }
    return t;
}

CsvTable distance_table(const DistanceMatrix& dm) {
    CsvTable t;
    t.header = {"class"};
    for (const auto& n : dm.class_names) t.header.push_back(n);
    for (std::size_t i = 0; i < dm.class_names.size(); ++i) {
        std::vector<std::string> row{dm.class_names[i]};
        for (std::size_t j = 0; j < dm.class_names.size(); ++j) {
            row.push_back(format_double(dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable confusable_pair_table(std::span<const ConfusablePair> pairs) {
    CsvTable t;
    t.header = {"first", "second", "distance"};
    for (const auto& p : pairs) t.rows.push_back({p.first, p.second, format_double(p.distance)});
    return t;
}

CsvTable area_iou_table(std::span<const AreaIouRow> rows) {
    CsvTable t;
    t.header = {"particle", "reference", "mask_area_px", "reference_area_px", "iou", "roi_percent"};
    for (const auto& r : rows) {
        t.rows.push_back({r.particle_name, std::string(to_string(r.reference_method)), format_double(r.mask_area_px, 10),
                          format_double(r.reference_area_px, 10), format_double(r.iou, 4),
                          format_double(r.roi_percent, 5)});
    }
    return t;
}

std::vector<AreaSeries> area_series_from_table(const CsvTable& t) {
    const std::size_t name = t.column("particle");
    const std::size_t mask = t.column("mask_area_px");
    const bool has_ref = t.has_column("reference");
    const std::size_t ref = has_ref ? t.column("reference") : 0;
    std::vector<AreaSeries> out;
    for (const auto& row : t.rows) {
        AreaSeries s;
        s.particle_name = row[name];
        s.mask_area_px = to_double(row[mask], "mask_area_px");
        if (has_ref && !row[ref].empty()) s.reference_method = parse_reference_method(row[ref]);
        for (std::size_t c = mask + 1; c < row.size(); ++c) {
            if (!row[c].empty()) s.condition_areas_px.push_back(to_double(row[c], "condition area"));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LabeledParticle> labeled_particles_from_table(const CsvTable& t) {
    const std::size_t cx = t.column("centroid_x");
    const std::size_t cy = t.column("centroid_y");
    const std::size_t lab = t.has_column("assigned_class") ? t.column("assigned_class") : t.column("label");
    std::vector<LabeledParticle> out;
    for (const auto& row : t.rows) {
        out.push_back({to_double(row[cx], "centroid_x"), to_double(row[cy], "centroid_y"), row[lab]});
    }
    return out;
}

} // namespace fimap
