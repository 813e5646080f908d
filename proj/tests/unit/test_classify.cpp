#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "data/reference_tables.hpp"
#include "fimap/classify.hpp"
#include "fimap/error.hpp"

using namespace fimap;

namespace {

Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = g(rng);
    return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

Eigen::VectorXd random_vec(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = g(rng);
    return v;
}

PolymerSignature signature(std::string name, Eigen::VectorXd mean, Eigen::MatrixXd cov, int n = 5) {
    PolymerSignature s;
    s.class_name = std::move(name);
    s.mean_vector = std::move(mean);
    s.covariance = std::move(cov);
    s.regularization_lambda = 0.0;
    s.inverse_covariance = s.covariance.inverse();
    s.sample_count = n;
    return s;
}

ParticleFingerprint fingerprint(int id, Eigen::VectorXd v) {
    ParticleFingerprint fp;
    fp.region_id = id;
    fp.feature_vector = std::move(v);
    return fp;
}

DistanceMatrix from_table(const fixtures::DistanceTable& t) {
    DistanceMatrix dm;
    dm.class_names = t.names;
    const auto n = static_cast<Eigen::Index>(t.names.size());
    dm.values = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dm.values(i, j) = dm.values(j, i) = t.upper[i][j - i - 1];
        }
    }
    return dm;
}

} // namespace

TEST(Mahalanobis, IdentityReducesToEuclidean) {
    Eigen::VectorXd x(2), m(2);
    x << 3, 4;
    m << 0, 0;
    EXPECT_DOUBLE_EQ(mahalanobis(x, m, Eigen::MatrixXd::Identity(2, 2)), 5.0);
    EXPECT_DOUBLE_EQ(mahalanobis(m, m, Eigen::MatrixXd::Identity(2, 2)), 0.0);
}

TEST(Mahalanobis, DiagonalScaling) {
    Eigen::VectorXd x(2), m(2);
    x << 2, 0;
    m << 0, 0;
    Eigen::MatrixXd cov = Eigen::Vector2d(4.0, 1.0).asDiagonal();
    EXPECT_NEAR(mahalanobis(x, m, cov.inverse()), 1.0, 1e-15);
}

TEST(Mahalanobis, Errors) {
    Eigen::VectorXd x(2), m(3);
    x.setZero();
    m.setZero();
    EXPECT_THROW(mahalanobis(x, m, Eigen::MatrixXd::Identity(2, 2)), Error);
    Eigen::VectorXd y(2);
    y << std::nan(""), 0;
    EXPECT_THROW(mahalanobis(y, x, Eigen::MatrixXd::Identity(2, 2)), Error);
}

TEST(Mahalanobis, AffineInvariance) {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 50; ++t) {
        const int d = 2 + t % 6;
        const Eigen::MatrixXd cov = random_spd(d, rng);
        const Eigen::VectorXd x = random_vec(d, rng), m = random_vec(d, rng), b = random_vec(d, rng);
        Eigen::MatrixXd a = random_spd(d, rng) + random_vec(d, rng) * random_vec(d, rng).transpose();
        if (std::fabs(a.determinant()) < 1e-3) continue;
        const double before = mahalanobis(x, m, cov.inverse());
        const Eigen::MatrixXd cov2 = a * cov * a.transpose();
        const double after = mahalanobis(a * x + b, a * m + b, cov2.inverse());
        ASSERT_NEAR(after, before, 1e-8 * std::max(1.0, before));
    }
}

TEST(Classify, NearestWithinTau) {
    FingerprintLibrary lib;
    Eigen::VectorXd a(2), b(2);
    a << 0, 0;
    b << 10, 0;
    lib.signatures = {signature("A", a, Eigen::MatrixXd::Identity(2, 2)),
                      signature("B", b, Eigen::MatrixXd::Identity(2, 2))};
    Eigen::VectorXd x(2);
    x << 2, 0;
    const auto r = classify_particle(fingerprint(7, x), lib);
    EXPECT_EQ(r.region_id, 7);
    EXPECT_EQ(r.assigned_class, "A");
    EXPECT_TRUE(r.classified());
    ASSERT_EQ(r.distances.size(), 2u);
    EXPECT_DOUBLE_EQ(r.distances[0].second, 2.0);
    EXPECT_DOUBLE_EQ(r.distances[1].second, 8.0);
    EXPECT_DOUBLE_EQ(r.min_distance(), 2.0);
    EXPECT_EQ(r.threshold_used, kDefaultTau);

    x << 5, 6;
    const auto far = classify_particle(fingerprint(8, x), lib);
    EXPECT_EQ(far.assigned_class, kUnclassified);
    EXPECT_FALSE(far.classified());
    EXPECT_EQ(classify_particle(fingerprint(8, x), lib, 100.0).assigned_class, "A");
}

TEST(Classify, ExactTieGoesToLexicallySmallest) {
    FingerprintLibrary lib;
    Eigen::VectorXd a(1), b(1);
    a << -1;
    b << 1;
    // Library order deliberately not lexical.
    lib.signatures = {signature("PS", b, Eigen::MatrixXd::Identity(1, 1)),
                      signature("EPS", a, Eigen::MatrixXd::Identity(1, 1))};
    Eigen::VectorXd x(1);
    x << 0;
    EXPECT_EQ(classify_particle(fingerprint(1, x), lib).assigned_class, "EPS");
}

TEST(Classify, DimensionMismatchAndEmptyLibrary) {
    FingerprintLibrary lib;
    Eigen::VectorXd x(3);
    x.setZero();
    EXPECT_THROW(classify_particle(fingerprint(1, x), lib), Error);
    Eigen::VectorXd a(2);
    a.setZero();
    lib.signatures = {signature("A", a, Eigen::MatrixXd::Identity(2, 2))};
    EXPECT_THROW(classify_particle(fingerprint(1, x), lib), Error);
}

TEST(DistanceMatrix, PooledCovarianceAndSymmetry) {
    FingerprintLibrary lib;
    Eigen::VectorXd a(2), b(2), c(2);
    a << 0, 0;
    b << 3, 0;
    c << 0, 4;
    Eigen::MatrixXd cov1 = Eigen::Vector2d(1.0, 4.0).asDiagonal();
    Eigen::MatrixXd cov2 = Eigen::Vector2d(3.0, 2.0).asDiagonal();
    lib.signatures = {signature("A", a, cov1, 3), signature("B", b, cov2, 1), signature("C", c, cov1, 4)};
    const auto dm = distance_matrix(lib, 0.0);
    // Pooled diag = ((3 + 4) * (1, 4) + 1 * (3, 2)) / 8 = (1.25, 3.75).
    EXPECT_NEAR(dm.values(0, 1), 3.0 / std::sqrt(1.25), 1e-6);
    EXPECT_NEAR(dm.values(0, 2), 4.0 / std::sqrt(3.75), 1e-6);
    EXPECT_NEAR(dm.values(1, 2), std::sqrt(9 / 1.25 + 16 / 3.75), 1e-6);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(dm.values(i, i), 0.0);
        for (int j = 0; j < 3; ++j) EXPECT_EQ(dm.values(i, j), dm.values(j, i));
    }
    FingerprintLibrary one;
    one.signatures = {lib.signatures[0]};
    EXPECT_THROW(distance_matrix(one), Error);
}

TEST(ConfusablePairs, ReferenceMatrices) {
    const auto virgin = flag_confusable_pairs(from_table(fixtures::kVirginDistances));
    ASSERT_EQ(virgin.size(), 1u);
    EXPECT_EQ(virgin[0].first, "EPS");
    EXPECT_EQ(virgin[0].second, "PS");
    EXPECT_DOUBLE_EQ(virgin[0].distance, 0.45);

    const auto small = flag_confusable_pairs(from_table(fixtures::kSmallParticleDistances));
    ASSERT_EQ(small.size(), 7u);
    EXPECT_EQ(small.front().first, "PS");
    EXPECT_EQ(small.front().second, "PET");
    EXPECT_EQ(small.back().first, "PP");
    EXPECT_EQ(small.back().second, "LDPE");
    for (std::size_t i = 1; i < small.size(); ++i) EXPECT_LE(small[i - 1].distance, small[i].distance);
}

TEST(ConfusablePairs, ThresholdIsStrict) {
    DistanceMatrix dm;
    dm.class_names = {"A", "B", "C"};
    dm.values = Eigen::MatrixXd::Zero(3, 3);
    dm.values(0, 1) = dm.values(1, 0) = 1.0;
    dm.values(0, 2) = dm.values(2, 0) = 0.5;
    dm.values(1, 2) = dm.values(2, 1) = 0.5;
    const auto p = flag_confusable_pairs(dm, 1.0);
    ASSERT_EQ(p.size(), 2u);
    // Stable among equal distances: row-major order.
    EXPECT_EQ(p[0].first, "A");
    EXPECT_EQ(p[1].first, "B");
    EXPECT_TRUE(flag_confusable_pairs(dm, 0.5).empty());
}
