#include <gtest/gtest.h>

#include "csl/error.hpp"
#include "csl/estimators.hpp"
#include "csl/evaluation.hpp"
#include "csl/rng.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <filesystem>

using namespace csl;
using csl::testing::gaussian;
using csl::testing::planted_concept;

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Four points whose class means coincide: cov(x, y) is exactly zero.
LabeledDataset null_fixture() {
    Matrix x(4, 2);
    x << 1, 0, -1, 0, 0, 1, 0, -1;
    return LabeledDataset(x, {Concept{"y", {"a", "b"}, {0, 0, 1, 1}}});
}

// Class means e1 and e2 in D=3 (noise confined to each class's own axis).
LabeledDataset axis_centroids() {
    Matrix x(4, 3);
    x << 0.5, 0, 0, 1.5, 0, 0, 0, 0.5, 0, 0, 1.5, 0;
    return LabeledDataset(x, {Concept{"y", {"a", "b"}, {0, 0, 1, 1}}});
}

LabeledDataset random_labelled(Eigen::Index n, Eigen::Index d, std::size_t c, std::uint64_t seed) {
    Matrix x = gaussian(n, d, seed);
    Labels labels(static_cast<std::size_t>(n));
    Xoshiro256 rng(seed, 3);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = static_cast<Label>(i < c ? i : rng.below(c));
        x.row(static_cast<Eigen::Index>(i)).head(std::min<Eigen::Index>(d, 2)).array() += 0.8 * labels[i];
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < c; ++k) {
        names.push_back(std::to_string(k));
    }
    return LabeledDataset(x, {Concept{"y", names, labels}});
}

LabeledDataset two_gaussians(const Vector& mu, std::size_t n, std::uint64_t seed) {
    const auto d = mu.size();
    Matrix x = gaussian(static_cast<Eigen::Index>(n), d, seed);
    Labels labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<Label>(i % 2);
        x.row(static_cast<Eigen::Index>(i)) += (i % 2 ? 1.0 : -1.0) * mu.transpose();
    }
    return LabeledDataset(x, {Concept{"y", {"neg", "pos"}, labels}});
}

double direction_cosine(const Projector& p, const Vector& v) {
    return (p.onto() * v).norm() / v.norm();
}

}  // namespace

TEST(Moments, TwoPointExample) {
    Matrix x(2, 2);
    x << 1, 0, -1, 0;
    const auto m = accumulate_moments(x, {0, 1}, 2);
    EXPECT_LE(m.mean_x().norm(), 0.0);
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = 1.0;
    EXPECT_LE(max_abs(m.cov_xx() - expected), 1e-15);
}

TEST(Moments, IdenticalRowsHaveZeroCrossCovariance) {
    const Matrix x = Matrix::Constant(6, 3, 2.5);
    const auto m = accumulate_moments(x, {0, 1, 2, 0, 1, 2}, 3);
    EXPECT_LE(max_abs(m.cov_xy()), 1e-15);
}

TEST(Moments, StreamingMatchesTwoPass) {
    const auto ds = random_labelled(1000, 7, 4, 12);
    const auto& labels = ds.get_concept("y").labels;
    const Matrix& x = ds.features();
    const auto m = accumulate_moments(x, labels, 4, 37);

    const Vector mean = x.colwise().mean();
    const Matrix xc = x.rowwise() - mean.transpose();
    const Matrix y = one_hot(labels, 4);
    const Matrix yc = y.rowwise() - y.colwise().mean();
    const double n = static_cast<double>(x.rows());
    const Matrix cxx = xc.transpose() * xc / n;
    const Matrix cxy = xc.transpose() * yc / n;
    EXPECT_LE(max_abs(m.mean_x() - mean), 1e-12);
    EXPECT_LE(max_abs(m.cov_xx() - cxx), 1e-9 * max_abs(cxx));
    EXPECT_LE(max_abs(m.cov_xy() - cxy), 1e-9 * max_abs(cxy));
    EXPECT_LE(max_abs(m.within_class_cov() + m.between_class_cov() - cxx), 1e-9 * max_abs(cxx));

    auto a = accumulate_moments(Matrix(x.topRows(300)), Labels(labels.begin(), labels.begin() + 300), 4);
    const auto b = accumulate_moments(Matrix(x.bottomRows(700)), Labels(labels.begin() + 300, labels.end()), 4);
    a.merge(b);
    EXPECT_LE(max_abs(a.cov_xx() - cxx), 1e-9 * max_abs(cxx));
    EXPECT_EQ(a.count(), 1000u);
}

TEST(Moments, MissingConceptIsLookupError) {
    try {
        accumulate_moments(null_fixture(), "nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Lookup);
    }
}

TEST(Mlr, SeparableAxisDataContainsAxis) {
    // Every row sits at distance 2 from the boundary along axis 1.
    Matrix x = csl::testing::gaussian(400, 3, 5);
    Labels labels(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<Label>(i % 2);
        x(i, 0) = i % 2 ? 2.0 : -2.0;
    }
    const LabeledDataset ds(x, {Concept{"y", {"neg", "pos"}, labels}});
    const auto s = estimate_mlr(ds, "y");
    EXPECT_GE(direction_cosine(s.projector, Vector::Unit(3, 0)), 0.99);
    EXPECT_FALSE(s.projector.oblique());
    EXPECT_LE(s.rank(), 2);
    EXPECT_TRUE(s.fit_stats.scalars.count("train_loss"));
}

TEST(Mlr, BudgetExhaustionIsFitError) {
    TrainConfig cfg;
    cfg.max_iter = 1;
    cfg.grad_tol = 1e-12;
    try {
        estimate_mlr(random_labelled(200, 5, 3, 2), "y", cfg);
        FAIL();
    } catch (const FitError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Fit);
        EXPECT_GT(e.grad_norm(), 0.0);
    }
}

TEST(Lda, FisherDirection) {
    Vector mu(4);
    mu << 1.0, 0.5, 0.0, -0.5;
    const auto ds = two_gaussians(mu, 10000, 8);
    const auto s = estimate_lda(ds, "y");
    EXPECT_EQ(s.rank(), 1);
    EXPECT_GE(direction_cosine(s.projector, mu), 0.99);
}

TEST(Lda, EqualClassMeansGiveRankZero) {
    EXPECT_EQ(estimate_lda(null_fixture(), "y").rank(), 0);
}

TEST(Lda, ZeroWithinCovarianceIsDegenerate) {
    Matrix x(4, 2);
    x << 0, 0, 0, 0, 1, 1, 1, 1;
    const LabeledDataset ds(x, {Concept{"y", {"a", "b"}, {0, 0, 1, 1}}});
    try {
        estimate_lda(ds, "y");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateCovariance);
    }
}

TEST(Cpca, AxisCentroids) {
    const auto s = estimate_cpca(axis_centroids(), "y");
    Matrix expected = Matrix::Zero(3, 3);
    expected(0, 0) = expected(1, 1) = 1.0;
    EXPECT_LE(max_abs(s.projector.onto() - expected), 1e-8);
}

TEST(Cpca, CollinearCentroids) {
    Matrix x(4, 3);
    x << 1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3;
    x.row(0) *= 0.5;
    x.row(1) *= 1.5;
    const LabeledDataset ds(x, {Concept{"y", {"a", "b"}, {0, 0, 1, 1}}});
    const auto s = estimate_cpca(ds, "y");
    EXPECT_EQ(s.rank(), 1);
    EXPECT_NEAR(direction_cosine(s.projector, Vector(Eigen::Vector3d(1, 2, 3))), 1.0, 1e-10);
}

TEST(Cpca, EmptyClassRejectedUnlessAllowed) {
    Matrix x = gaussian(4, 3, 1);
    const LabeledDataset ds(x, {Concept{"y", {"a", "b", "c"}, {0, 0, 1, 1}}});
    try {
        estimate_cpca(ds, "y");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InputValidation);
    }
    EXPECT_EQ(estimate_cpca(ds, "y", std::nullopt, true).rank(), 2);
}

TEST(Cov, BalancedTwoClassDirection) {
    Vector mu(5);
    mu << 0.3, -1.0, 0.2, 0.0, 0.6;
    const auto s = estimate_cov(two_gaussians(mu, 10000, 3), "y");
    EXPECT_EQ(s.rank(), 1);
    EXPECT_GE(direction_cosine(s.projector, mu), 0.99);
}

TEST(Cov, IndependentFeaturesGiveRankZero) {
    EXPECT_EQ(estimate_cov(null_fixture(), "y").rank(), 0);
}

TEST(Leace, NullFixtureGivesZeroProjector) {
    const auto s = estimate_leace(null_fixture(), "y");
    EXPECT_EQ(s.rank(), 0);
    EXPECT_LE(max_abs(s.projector.complement() - Matrix::Identity(2, 2)), 1e-12);
}

TEST(Leace, ZeroCovarianceIsDegenerate) {
    const LabeledDataset ds(Matrix::Ones(4, 2), {Concept{"y", {"a", "b"}, {0, 0, 1, 1}}});
    try {
        estimate_leace(ds, "y");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateCovariance);
    }
}

TEST(Leace, ErasesLinearCrossCovariance) {
    const auto ds = random_labelled(500, 6, 4, 77);
    const auto s = estimate_leace(ds, "y");
    EXPECT_TRUE(s.projector.oblique());
    EXPECT_EQ(s.rank(), 3);
    const Matrix erased = ds.features() * s.projector.complement().transpose();
    const auto m = accumulate_moments(erased, ds.get_concept("y").labels, 4);
    EXPECT_LE(max_abs(m.cov_xy()), 1e-10);
}

TEST(Leace, RequestedDimBeyondSignalIsCompleted) {
    const auto ds = random_labelled(500, 6, 3, 78);
    const auto s = estimate_leace(ds, "y", 5);
    EXPECT_EQ(s.rank(), 5);
    EXPECT_LE(s.projector.idempotency_residual(), 1e-8);
    EXPECT_EQ(estimate_leace(ds, "y", 6).rank(), 6);
    try {
        estimate_leace(ds, "y", 7);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
    }
}

TEST(Rand, DeterministicFullRank) {
    const auto a = estimate_rand(10, 4, 99);
    const auto b = estimate_rand(10, 4, 99);
    EXPECT_EQ(a.projector.onto(), b.projector.onto());
    EXPECT_EQ(a.rank(), 4);
    EXPECT_NE(estimate_rand(10, 4, 100).projector.onto(), a.projector.onto());
}

TEST(Rand, MoreClassesThanDimensions) {
    try {
        estimate_rand(3, 4, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
        EXPECT_EQ(exit_code(e.kind()), 2);
    }
}

TEST(Estimators, ParseAndPrint) {
    for (auto kind : kAllEstimators) {
        EXPECT_EQ(parse_estimator(to_string(kind)), kind);
    }
    EXPECT_EQ(parse_estimator("leace"), EstimatorKind::Leace);
    EXPECT_THROW(parse_estimator("pca"), Error);
}

TEST(Estimators, RequestedDimCapsRank) {
    const auto ds = random_labelled(400, 8, 5, 4);
    for (auto kind : kAllEstimators) {
        EstimatorConfig cfg;
        cfg.dim = 2;
        const auto s = estimate(kind, ds, "y", cfg);
        EXPECT_LE(s.rank(), 2) << to_string(kind);
        EXPECT_EQ(s.requested_dim, 2);
    }
}

TEST(Estimators, ClassPermutationInvariance) {
    const auto ds = random_labelled(300, 6, 4, 21);
    const auto& c = ds.get_concept("y");
    const Label perm[] = {2, 0, 3, 1};
    Labels permuted;
    for (Label y : c.labels) {
        permuted.push_back(perm[y]);
    }
    const LabeledDataset shuffled(ds.features(), {Concept{"y", c.class_names, permuted}});
    for (auto kind : {EstimatorKind::Cpca, EstimatorKind::Cov, EstimatorKind::Leace, EstimatorKind::Lda}) {
        const auto a = estimate(kind, ds, "y");
        const auto b = estimate(kind, shuffled, "y");
        EXPECT_LE(max_abs(a.projector.onto() - b.projector.onto()), 1e-8) << to_string(kind);
    }
}

TEST(Estimators, ScaleInvariance) {
    const auto ds = random_labelled(300, 5, 3, 31);
    const LabeledDataset scaled(ds.features() * 7.5, ds.concepts());
    // Unpenalized probe: a ridge term would tie the MLR solution to the feature scale.
    EstimatorConfig cfg;
    cfg.probe.ridge = 0.0;
    cfg.probe.grad_tol = 1e-7;
    for (auto kind : {EstimatorKind::Mlr, EstimatorKind::Lda, EstimatorKind::Cpca, EstimatorKind::Cov,
                      EstimatorKind::Leace}) {
        const auto a = estimate(kind, ds, "y", cfg);
        const auto b = estimate(kind, scaled, "y", cfg);
        EXPECT_EQ(a.rank(), b.rank()) << to_string(kind);
        EXPECT_LE(max_abs(a.projector.onto() - b.projector.onto()), 1e-6) << to_string(kind);
    }
}

TEST(Estimators, ProjectorAlgebraOnRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Eigen::Index d = 4 + static_cast<Eigen::Index>(seed % 9);
        const auto ds = random_labelled(120, d, std::min<std::size_t>(2 + seed % 4, d), 500 + seed);
        for (auto kind : kAllEstimators) {
            EstimatorConfig cfg;
            cfg.seed = seed;
            const auto s = estimate(kind, ds, "y", cfg);
            EXPECT_LE(s.projector.idempotency_residual(), 1e-6);
            if (kind != EstimatorKind::Leace) {
                EXPECT_LE(s.projector.symmetry_residual(), 1e-6);
                EXPECT_FALSE(s.projector.oblique());
            }
        }
    }
}

TEST(Estimators, PlantedRecoveryAngles) {
    PlantedSpec spec;
    spec.dim = 24;
    spec.signal_dim = 3;
    auto y = planted_concept("y", 4, 3.0, 5);
    y.layout = MeanLayout::Simplex;
    spec.concepts = {y, planted_concept("z", 3, 3.0, 6)};
    const auto data = generate_planted(spec, 20000, 4);
    for (auto kind : {EstimatorKind::Lda, EstimatorKind::Cov, EstimatorKind::Leace}) {
        const auto s = estimate(kind, data.dataset, "y");
        const Matrix basis = orthonormal_basis(s.projector.onto());
        ASSERT_EQ(basis.cols(), 3) << to_string(kind);
        EXPECT_LE(principal_angles(basis, data.bases[0]).maxCoeff(), 5.0 * M_PI / 180.0) << to_string(kind);
    }
}

TEST(SubspaceArtifact, RoundTrip) {
    const auto ds = random_labelled(200, 6, 3, 9);
    for (auto kind : {EstimatorKind::Leace, EstimatorKind::Rand}) {
        EstimatorConfig cfg;
        cfg.seed = 4;
        cfg.dim = 2;
        auto s = estimate(kind, ds, "y", cfg);
        const auto bytes = encode_subspace(s);
        EXPECT_EQ(bytes.substr(0, 4), "CSUB");
        const auto back = decode_subspace(bytes);
        EXPECT_EQ(back.projector.onto(), s.projector.onto());
        EXPECT_EQ(back.estimator, kind);
        EXPECT_EQ(back.concept_name, "y");
        EXPECT_EQ(back.rank(), s.rank());
        EXPECT_EQ(back.projector.oblique(), s.projector.oblique());
        EXPECT_EQ(back.requested_dim, 2);
        EXPECT_EQ(encode_subspace(back), bytes);
    }
    const auto path = std::filesystem::temp_directory_path() / "csl_subspace_test.csub";
    const auto s = estimate_cpca(axis_centroids(), "y");
    save_subspace(s, path);
    EXPECT_EQ(load_subspace(path).projector.onto(), s.projector.onto());
    std::filesystem::remove(path);
}

TEST(SubspaceArtifact, CorruptBytesAreFormatErrors) {
    const auto bytes = encode_subspace(estimate_rand(4, 2, 1));
    std::string bad = bytes;
    bad[1] = 'X';
    EXPECT_THROW(decode_subspace(bad), FormatError);
    EXPECT_THROW(decode_subspace(bytes.substr(0, bytes.size() - 3)), FormatError);
    EXPECT_THROW(decode_subspace(bytes + "zz"), FormatError);
}
