#include "fimap/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fimap/error.hpp"

namespace fimap {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_degrees(double h) {
    h = std::fmod(h, 360.0);
    if (h < 0.0) h += 360.0;
    if (h < 1e-9 || h > 360.0 - 1e-9) h = 0.0;
    return h;
}

} // namespace

HsvStats hsv_stats(std::span<const HsvPixel> pixels) {
    if (pixels.empty()) {
        throw Error("hsv_stats: empty pixel set");
    }
    const double n = static_cast<double>(pixels.size());
    double c = 0.0, s = 0.0, ms = 0.0, mv = 0.0;
    for (const auto& p : pixels) {
        c += std::cos(p.h * kDeg);
        s += std::sin(p.h * kDeg);
        ms += p.s;
        mv += p.v;
    }
    c /= n;
    s /= n;
    ms /= n;
    mv /= n;

    HsvStats out;
    const double r = std::hypot(c, s);
    out.mean_h = r > 1e-12 ? wrap_degrees(std::atan2(s, c) / kDeg) : 0.0;
    out.std_h = 1.0 - r < 1e-12 ? 0.0 : std::sqrt(-2.0 * std::log(std::max(r, 1e-300))) / kDeg;
    out.mean_s = ms;
    out.mean_v = mv;

    double vs = 0.0, vv = 0.0;
    for (const auto& p : pixels) {
        vs += (p.s - ms) * (p.s - ms);
        vv += (p.v - mv) * (p.v - mv);
    }
    out.std_s = std::sqrt(vs / n);
    out.std_v = std::sqrt(vv / n);
    return out;
}

std::string_view to_string(FeatureEncoding e) {
    return e == FeatureEncoding::chroma ? "chroma" : "chroma_with_std";
}

FeatureEncoding parse_feature_encoding(std::string_view s) {
    if (s == "chroma") return FeatureEncoding::chroma;
    if (s == "chroma_with_std") return FeatureEncoding::chroma_with_std;
    throw Error("unknown feature encoding '" + std::string(s) + "'");
}

std::size_t features_per_condition(FeatureEncoding e) {
    return e == FeatureEncoding::chroma ? 3 : 6;
}

Eigen::VectorXd encode_features(std::span<const HsvStats> per_condition, FeatureEncoding e) {
    const std::size_t per = features_per_condition(e);
    Eigen::VectorXd v(static_cast<Eigen::Index>(per * per_condition.size()));
    Eigen::Index k = 0;
    for (const auto& st : per_condition) {
        v[k++] = std::cos(st.mean_h * kDeg) * st.mean_s;
        v[k++] = std::sin(st.mean_h * kDeg) * st.mean_s;
        v[k++] = st.mean_v;
        if (e == FeatureEncoding::chroma_with_std) {
            v[k++] = st.std_h / 360.0;
            v[k++] = st.std_s;
            v[k++] = st.std_v;
        }
    }
    return v;
}

ParticleFingerprint extract_fingerprint(const ImageStack& stack, const Region& region,
                                        const StackManifest& manifest, const ExtractOptions& opts) {
    if (region.pixels.empty()) {
        throw Error("extract_fingerprint: region " + std::to_string(region.id) + " is empty");
    }
    if (stack.size() != manifest.condition_count()) {
        throw Error("extract_fingerprint: stack does not match manifest condition count");
    }
    for (const auto& p : region.pixels) {
        if (p.x < 0 || p.y < 0 || p.x >= stack.width || p.y >= stack.height) {
            throw Error("extract_fingerprint: region " + std::to_string(region.id) + " leaves the stack bounds");
        }
    }
    if (opts.pixel_covariance && opts.encoding != FeatureEncoding::chroma) {
        throw Error("pixel-level covariance is defined for the chroma encoding only");
    }

    const std::size_t n = region.pixels.size();
    const std::size_t m = stack.size();
    ParticleFingerprint fp;
    fp.region_id = region.id;
    fp.encoding = opts.encoding;
    fp.pixel_count = n;

    Eigen::MatrixXd per_pixel;
    if (opts.pixel_covariance) {
        per_pixel.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(3 * m));
    }

    std::vector<HsvPixel> hsv(n);
    for (std::size_t c = 0; c < m; ++c) {
        const auto& img = stack.images[c];
        for (std::size_t i = 0; i < n; ++i) {
            hsv[i] = rgb_to_hsv(img.at(region.pixels[i].x, region.pixels[i].y));
            if (opts.pixel_covariance) {
                const auto row = static_cast<Eigen::Index>(i);
                const auto col = static_cast<Eigen::Index>(3 * c);
                per_pixel(row, col) = std::cos(hsv[i].h * kDeg) * hsv[i].s;
                per_pixel(row, col + 1) = std::sin(hsv[i].h * kDeg) * hsv[i].s;
                per_pixel(row, col + 2) = hsv[i].v;
            }
        }
        fp.per_condition.push_back(hsv_stats(hsv));
    }
    fp.feature_vector = encode_features(fp.per_condition, fp.encoding);

    if (opts.pixel_covariance) {
        const auto d = per_pixel.cols();
        if (n < 2) {
            fp.pixel_covariance = Eigen::MatrixXd::Zero(d, d);
        } else {
            const Eigen::RowVectorXd mean = per_pixel.colwise().mean();
            const Eigen::MatrixXd centered = per_pixel.rowwise() - mean;
            fp.pixel_covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
        }
    }
    return fp;
}

std::vector<ParticleFingerprint> extract_fingerprints(const ImageStack& stack, const LabelMap& labels,
                                                      const StackManifest& manifest,
                                                      const ExtractOptions& opts) {
    if (labels.width != stack.width || labels.height != stack.height) {
        throw Error("label map dimensions do not match the image stack");
    }
    std::vector<ParticleFingerprint> out;
    out.reserve(labels.regions.size());
    for (const auto& r : labels.regions) {
        out.push_back(extract_fingerprint(stack, r, manifest, opts));
    }
    return out;
}

const PolymerSignature* FingerprintLibrary::find(std::string_view class_name) const {
    for (const auto& s : signatures) {
        if (s.class_name == class_name) return &s;
    }
    return nullptr;
}

std::string_view to_string(CovarianceSource c) {
    return c == CovarianceSource::between_samples ? "between_samples" : "within_particle";
}

CovarianceSource parse_covariance_source(std::string_view s) {
    if (s == "between_samples" || s == "samples") return CovarianceSource::between_samples;
    if (s == "within_particle" || s == "pixel") return CovarianceSource::within_particle;
    throw Error("unknown covariance source '" + std::string(s) + "'");
}

double regularization_lambda(const Eigen::MatrixXd& cov, double lambda_rel) {
    if (lambda_rel < 0.0) {
        throw Error("lambda_rel must be nonnegative");
    }
    const double d = static_cast<double>(cov.rows());
    const double lam = d > 0 ? lambda_rel * cov.trace() / d : 0.0;
    return std::max(lam, kLambdaFloor);
}

Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& cov, double lambda) {
    const auto d = cov.rows();
    const Eigen::MatrixXd reg = cov + lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) {
        throw Error("regularized covariance is not positive definite");
    }
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    return 0.5 * (inv + inv.transpose());
}

FingerprintLibrary build_library(const TrainingSamples& samples, const LibraryOptions& opts,
                                 std::string digest) {
    if (samples.empty()) {
        throw Error("build_library: no classes");
    }
    FingerprintLibrary lib;
    lib.manifest_digest = std::move(digest);

    Eigen::Index d = -1;
    bool first = true;
    for (const auto& [name, fps] : samples) {
        if (fps.empty()) {
            throw Error("build_library: class '" + name + "' has no samples");
        }
        for (const auto& fp : fps) {
            if (first) {
                d = fp.feature_vector.size();
                lib.encoding = fp.encoding;
                lib.condition_count = fp.condition_count();
                first = false;
            } else if (fp.feature_vector.size() != d || fp.encoding != lib.encoding) {
                throw Error("build_library: dimension mismatch in class '" + name + "'");
            }
        }

        PolymerSignature sig;
        sig.class_name = name;
        sig.sample_count = static_cast<int>(fps.size());
        sig.mean_vector = Eigen::VectorXd::Zero(d);
        for (const auto& fp : fps) sig.mean_vector += fp.feature_vector;
        sig.mean_vector /= static_cast<double>(fps.size());

        sig.covariance = Eigen::MatrixXd::Zero(d, d);
        if (opts.covariance == CovarianceSource::between_samples) {
            if (fps.size() > 1) {
                for (const auto& fp : fps) {
                    const Eigen::VectorXd c = fp.feature_vector - sig.mean_vector;
                    sig.covariance += c * c.transpose();
                }
                sig.covariance /= static_cast<double>(fps.size() - 1);
            }
        } else {
            double weight = 0.0;
            for (const auto& fp : fps) {
                if (fp.pixel_covariance.rows() != d || fp.pixel_covariance.cols() != d) {
                    throw Error("build_library: class '" + name +
                                "' lacks pixel-level covariance (extract with pixel covariance enabled)");
                }
                const double w = fp.pixel_count > 1 ? static_cast<double>(fp.pixel_count - 1) : 0.0;
                sig.covariance += w * fp.pixel_covariance;
                weight += w;
            }
            if (weight > 0.0) sig.covariance /= weight;
        }
        sig.covariance = 0.5 * (sig.covariance + sig.covariance.transpose()).eval();
        sig.regularization_lambda = regularization_lambda(sig.covariance, opts.lambda_rel);
        sig.inverse_covariance = regularized_inverse(sig.covariance, sig.regularization_lambda);
        lib.signatures.push_back(std::move(sig));
    }
    return lib;
}

std::string manifest_digest(const StackManifest& manifest) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](std::string_view s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& c : manifest.conditions) {
        feed(std::to_string(c.index));
        feed(":");
        feed(std::to_string(c.excitation_wavelength_nm));
        feed(":");
        feed(to_string(c.optical_filter));
        feed(";");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::optional<std::string> digest_warning(const FingerprintLibrary& lib, std::string_view digest) {
    if (lib.manifest_digest.empty() || digest.empty() || lib.manifest_digest == digest) {
        return std::nullopt;
    }
    return "library was built on a different condition set (digest " + lib.manifest_digest + " vs " +
           std::string(digest) + ")";
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    return flat;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index d, const std::string& what) {
    const auto flat = j.get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(d * d)) {
        throw Error(what + ": expected " + std::to_string(d * d) + " entries");
    }
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = flat[static_cast<std::size_t>(r * d + c)];
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
    const auto flat = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

json read_json(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw Error(std::string("cannot open ") + what + " " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(std::string(what) + " parse failure: " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc, const char* what) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) {
        throw Error(std::string("cannot write ") + what + " " + path.string());
    }
    out << doc.dump(1) << '\n';
}

} // namespace

void save_library(const FingerprintLibrary& lib, const std::filesystem::path& path) {
    json doc;
    doc["schema_version"] = lib.schema_version;
    doc["manifest_digest"] = lib.manifest_digest;
    doc["encoding"] = std::string(to_string(lib.encoding));
    doc["condition_count"] = lib.condition_count;
    doc["dimension"] = lib.dimension();
    doc["signatures"] = json::array();
    for (const auto& s : lib.signatures) {
        json e;
        e["class_name"] = s.class_name;
        e["sample_count"] = s.sample_count;
        e["regularization_lambda"] = s.regularization_lambda;
        e["mean_vector"] = vector_to_json(s.mean_vector);
        e["covariance"] = matrix_to_json(s.covariance);
        e["inverse_covariance"] = matrix_to_json(s.inverse_covariance);
        doc["signatures"].push_back(std::move(e));
    }
    write_json(path, doc, "library");
}

FingerprintLibrary load_library(const std::filesystem::path& path) {
    const json doc = read_json(path, "library");
    FingerprintLibrary lib;
    try {
        lib.schema_version = doc.at("schema_version").get<int>();
        if (lib.schema_version != kLibrarySchemaVersion) {
            throw Error("unsupported library schema_version " + std::to_string(lib.schema_version) +
                        " (expected " + std::to_string(kLibrarySchemaVersion) + ")");
        }
        lib.manifest_digest = doc.value("manifest_digest", std::string{});
        lib.encoding = parse_feature_encoding(doc.value("encoding", std::string("chroma")));
        lib.condition_count = doc.value("condition_count", std::size_t{0});
        const auto d = static_cast<Eigen::Index>(doc.at("dimension").get<std::size_t>());
        std::set<std::string> names;
        for (const auto& e : doc.at("signatures")) {
            PolymerSignature s;
            s.class_name = e.at("class_name").get<std::string>();
            if (!names.insert(s.class_name).second) {
                throw Error("library has duplicate class '" + s.class_name + "'");
            }
            s.sample_count = e.at("sample_count").get<int>();
            s.regularization_lambda = e.at("regularization_lambda").get<double>();
            s.mean_vector = vector_from_json(e.at("mean_vector"));
            if (s.mean_vector.size() != d) {
                throw Error("library class '" + s.class_name + "': mean vector has wrong dimension");
            }
            s.covariance = matrix_from_json(e.at("covariance"), d, "covariance of " + s.class_name);
            s.inverse_covariance =
                matrix_from_json(e.at("inverse_covariance"), d, "inverse covariance of " + s.class_name);
            lib.signatures.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("library parse failure: ") + e.what());
    }
    if (lib.signatures.empty()) {
        throw Error("library has no signatures");
    }
    return lib;
}

void save_fingerprints(const FingerprintSet& set, const std::filesystem::path& path) {
    json doc;
    doc["schema_version"] = kLibrarySchemaVersion;
    doc["manifest_digest"] = set.manifest_digest;
    doc["condition_indices"] = set.condition_indices;
    doc["fingerprints"] = json::array();
    for (const auto& fp : set.fingerprints) {
        json e;
        e["region_id"] = fp.region_id;
        e["encoding"] = std::string(to_string(fp.encoding));
        e["pixel_count"] = fp.pixel_count;
        json stats = json::array();
        for (const auto& s : fp.per_condition) {
            stats.push_back({s.mean_h, s.std_h, s.mean_s, s.std_s, s.mean_v, s.std_v});
        }
        e["per_condition"] = std::move(stats);
        e["feature_vector"] = vector_to_json(fp.feature_vector);
        if (fp.pixel_covariance.size() > 0) {
            e["pixel_covariance"] = matrix_to_json(fp.pixel_covariance);
        }
        doc["fingerprints"].push_back(std::move(e));
    }
    write_json(path, doc, "fingerprint set");
}

FingerprintSet load_fingerprints(const std::filesystem::path& path) {
    const json doc = read_json(path, "fingerprint set");
    FingerprintSet set;
    try {
        if (doc.value("schema_version", 0) != kLibrarySchemaVersion) {
            throw Error("unsupported fingerprint schema_version");
        }
        set.manifest_digest = doc.value("manifest_digest", std::string{});
        set.condition_indices = doc.value("condition_indices", std::vector<int>{});
        for (const auto& e : doc.at("fingerprints")) {
            ParticleFingerprint fp;
            fp.region_id = e.at("region_id").get<int>();
            fp.encoding = parse_feature_encoding(e.value("encoding", std::string("chroma")));
            fp.pixel_count = e.value("pixel_count", std::size_t{0});
            for (const auto& s : e.at("per_condition")) {
                const auto v = s.get<std::vector<double>>();
                if (v.size() != 6) throw Error("per-condition statistics need 6 values");
                fp.per_condition.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
            }
            fp.feature_vector = vector_from_json(e.at("feature_vector"));
            if (e.contains("pixel_covariance")) {
                fp.pixel_covariance =
                    matrix_from_json(e["pixel_covariance"], fp.feature_vector.size(), "pixel covariance");
            }
            set.fingerprints.push_back(std::move(fp));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("fingerprint set parse failure: ") + e.what());
    }
    return set;
}

} // namespace fimap
