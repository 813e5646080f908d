#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fimap/fingerprint.hpp"

namespace fimap {

inline constexpr std::string_view kUnclassified = "UNCLASSIFIED";
inline constexpr double kDefaultTau = 5.0;

/// sqrt((x - m)^T C^-1 (x - m)), in standard deviations. Throws on a
/// dimension mismatch or a non-finite result.
double mahalanobis(const Eigen::VectorXd& x, const Eigen::VectorXd& m, const Eigen::MatrixXd& inverse_covariance);

struct ClassificationResult {
    int region_id = 0;
    std::string assigned_class{kUnclassified};
    // One entry per library class, in library order.
    std::vector<std::pair<std::string, double>> distances;
    double threshold_used = kDefaultTau;

    bool classified() const { return assigned_class != kUnclassified; }
    double min_distance() const;
};

/// Nearest signature by Mahalanobis distance under that signature's own
/// inverse covariance; UNCLASSIFIED when the minimum exceeds tau. Exact
/// ties resolve to the lexically smallest class name.
ClassificationResult classify_particle(const ParticleFingerprint& fp, const FingerprintLibrary& lib,
                                       double tau = kDefaultTau);

struct DistanceMatrix {
    std::vector<std::string> class_names;
    Eigen::MatrixXd values;
};

/// Class-to-class distances between signature means under the pooled
/// covariance (sample-count weighted, ridge-regularized with lambda_rel).
DistanceMatrix distance_matrix(const FingerprintLibrary& lib, double lambda_rel = 1e-3);

struct ConfusablePair {
    std::string first;
    std::string second;
    double distance = 0.0;
};

/// Unordered pairs closer than `threshold`, ascending by distance. Pair
/// members follow matrix order (row before column).
std::vector<ConfusablePair> flag_confusable_pairs(const DistanceMatrix& dm, double threshold = 1.0);

} // namespace fimap
