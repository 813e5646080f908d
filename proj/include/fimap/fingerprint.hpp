#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fimap/colorspace.hpp"
#include "fimap/ingest.hpp"
#include "fimap/segment.hpp"

namespace fimap {

/// Per-condition color statistics of one particle. Hue uses circular
/// statistics (degrees); S and V use the arithmetic mean and the population
/// standard deviation.
struct HsvStats {
    double mean_h = 0.0;
    double std_h = 0.0;
    double mean_s = 0.0;
    double std_s = 0.0;
    double mean_v = 0.0;
    double std_v = 0.0;
};

HsvStats hsv_stats(std::span<const HsvPixel> pixels);

// chroma:          (cos h * s, sin h * s, v) per condition, from the means.
// chroma_with_std: chroma followed by (std_h / 360, std_s, std_v).
enum class FeatureEncoding { chroma, chroma_with_std };

std::string_view to_string(FeatureEncoding e);
FeatureEncoding parse_feature_encoding(std::string_view s);
std::size_t features_per_condition(FeatureEncoding e);

Eigen::VectorXd encode_features(std::span<const HsvStats> per_condition, FeatureEncoding e);

struct ParticleFingerprint {
    int region_id = 0;
    std::vector<HsvStats> per_condition;
    FeatureEncoding encoding = FeatureEncoding::chroma;
    Eigen::VectorXd feature_vector;
    std::size_t pixel_count = 0;
    // Covariance of the per-pixel chroma vectors across all conditions;
    // empty unless requested at extraction.
    Eigen::MatrixXd pixel_covariance;

    std::size_t condition_count() const noexcept { return per_condition.size(); }
};

struct ExtractOptions {
    FeatureEncoding encoding = FeatureEncoding::chroma;
    bool pixel_covariance = false;
};

ParticleFingerprint extract_fingerprint(const ImageStack& stack, const Region& region,
                                        const StackManifest& manifest, const ExtractOptions& opts = {});

std::vector<ParticleFingerprint> extract_fingerprints(const ImageStack& stack, const LabelMap& labels,
                                                      const StackManifest& manifest,
                                                      const ExtractOptions& opts = {});

struct PolymerSignature {
    std::string class_name;
    Eigen::VectorXd mean_vector;
    Eigen::MatrixXd covariance;          // unregularized
    Eigen::MatrixXd inverse_covariance;  // (covariance + lambda I)^-1
    double regularization_lambda = 0.0;
    int sample_count = 0;
};

inline constexpr int kLibrarySchemaVersion = 1;

struct FingerprintLibrary {
    std::vector<PolymerSignature> signatures;  // sorted by class name
    std::string manifest_digest;
    int schema_version = kLibrarySchemaVersion;
    FeatureEncoding encoding = FeatureEncoding::chroma;
    std::size_t condition_count = 0;

    std::size_t dimension() const {
        return signatures.empty() ? 0 : static_cast<std::size_t>(signatures.front().mean_vector.size());
    }
    const PolymerSignature* find(std::string_view class_name) const;
};

// between_samples:  sample covariance of the class's fingerprints (n - 1).
// within_particle:  pooled per-pixel covariance of the class's particles;
//                   usable with a single exemplar per class.
enum class CovarianceSource { between_samples, within_particle };

std::string_view to_string(CovarianceSource c);
CovarianceSource parse_covariance_source(std::string_view s);

struct LibraryOptions {
    double lambda_rel = 1e-3;
    CovarianceSource covariance = CovarianceSource::between_samples;
};

inline constexpr double kLambdaFloor = 1e-9;

/// lambda_rel * trace(cov) / d, floored at kLambdaFloor.
double regularization_lambda(const Eigen::MatrixXd& cov, double lambda_rel);

/// (cov + lambda I)^-1 through a Cholesky factorization.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& cov, double lambda);

using TrainingSamples = std::map<std::string, std::vector<ParticleFingerprint>>;

FingerprintLibrary build_library(const TrainingSamples& samples, const LibraryOptions& opts = {},
                                 std::string manifest_digest = {});

/// Stable 64-bit FNV-1a digest (hex) of the condition set: index,
/// wavelength and filter of every condition in order.
std::string manifest_digest(const StackManifest& manifest);

/// A message when `lib` was built on a different condition set.
std::optional<std::string> digest_warning(const FingerprintLibrary& lib, std::string_view digest);

void save_library(const FingerprintLibrary& lib, const std::filesystem::path& path);
FingerprintLibrary load_library(const std::filesystem::path& path);

struct FingerprintSet {
    std::string manifest_digest;
    std::vector<int> condition_indices;
    std::vector<ParticleFingerprint> fingerprints;
};

void save_fingerprints(const FingerprintSet& set, const std::filesystem::path& path);
FingerprintSet load_fingerprints(const std::filesystem::path& path);

} // namespace fimap
