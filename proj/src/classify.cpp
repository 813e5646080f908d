#include "fimap/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fimap/error.hpp"

namespace fimap {

double mahalanobis(const Eigen::VectorXd& x, const Eigen::VectorXd& m, const Eigen::MatrixXd& inverse_covariance) {
    if (x.size() != m.size() || inverse_covariance.rows() != x.size() || inverse_covariance.cols() != x.size()) {
        throw Error("mahalanobis: dimension mismatch");
    }
    const Eigen::VectorXd diff = x - m;
    const double q = diff.dot(inverse_covariance * diff);
    if (!std::isfinite(q)) {
        throw Error("mahalanobis: non-finite result");
    }
    // Round-off can leave a tiny negative quadratic form at x == m.
    return std::sqrt(std::max(q, 0.0));
}

double ClassificationResult::min_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [name, d] : distances) best = std::min(best, d);
    return best;
}

ClassificationResult classify_particle(const ParticleFingerprint& fp, const FingerprintLibrary& lib, double tau) {
    if (lib.signatures.empty()) {
        throw Error("classify_particle: empty library");
    }
    if (static_cast<std::size_t>(fp.feature_vector.size()) != lib.dimension()) {
        throw Error("classify_particle: region " + std::to_string(fp.region_id) + " has dimension " +
                    std::to_string(fp.feature_vector.size()) + ", library has " +
                    std::to_string(lib.dimension()));
    }
    ClassificationResult res;
    res.region_id = fp.region_id;
    res.threshold_used = tau;

    const PolymerSignature* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& sig : lib.signatures) {
        const double d = mahalanobis(fp.feature_vector, sig.mean_vector, sig.inverse_covariance);
        res.distances.emplace_back(sig.class_name, d);
        if (d < best_d || (d == best_d && best && sig.class_name < best->class_name)) {
            best_d = d;
            best = &sig;
        }
    }
    if (best && best_d <= tau) {
        res.assigned_class = best->class_name;
    }
    return res;
}

DistanceMatrix distance_matrix(const FingerprintLibrary& lib, double lambda_rel) {
    const std::size_t n = lib.signatures.size();
    if (n < 2) {
        throw Error("distance_matrix: need at least two classes");
    }
    const auto d = static_cast<Eigen::Index>(lib.dimension());
    Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);
    double total = 0.0;
    for (const auto& s : lib.signatures) {
        pooled += s.sample_count * s.covariance;
        total += s.sample_count;
    }
    pooled /= total;
    const Eigen::MatrixXd inv = regularized_inverse(pooled, regularization_lambda(pooled, lambda_rel));

    DistanceMatrix dm;
    dm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a) {
        dm.class_names.push_back(lib.signatures[a].class_name);
        for (std::size_t b = a + 1; b < n; ++b) {
            const double v = mahalanobis(lib.signatures[a].mean_vector, lib.signatures[b].mean_vector, inv);
            dm.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            dm.values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }
    }
    return dm;
}

std::vector<ConfusablePair> flag_confusable_pairs(const DistanceMatrix& dm, double threshold) {
    std::vector<ConfusablePair> out;
    const auto n = static_cast<Eigen::Index>(dm.class_names.size());
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const double v = dm.values(a, b);
            if (v < threshold) {
                out.push_back({dm.class_names[a], dm.class_names[b], v});
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ConfusablePair& x, const ConfusablePair& y) { return x.distance < y.distance; });
    return out;
}

} // namespace fimap
