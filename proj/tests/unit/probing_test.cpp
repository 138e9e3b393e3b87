#include <gtest/gtest.h>

#include "csl/error.hpp"
#include "csl/estimators.hpp"
#include "csl/probing.hpp"
#include "csl/rng.hpp"
#include "fixtures.hpp"

using namespace csl;
using csl::testing::gaussian;

namespace {

struct Fixture {
    Matrix x;
    Labels labels;
};

Fixture noisy_classes(Eigen::Index n, Eigen::Index d, std::size_t c, std::uint64_t seed) {
    Fixture f{gaussian(n, d, seed), Labels(static_cast<std::size_t>(n))};
    Xoshiro256 rng(seed, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto y = static_cast<Label>(rng.below(c));
        f.labels[static_cast<std::size_t>(i)] = y;
        f.x(i, static_cast<Eigen::Index>(y) % d) += 1.2;
    }
    return f;
}

}  // namespace

TEST(Probe, SingleClassPredictsThatClass) {
    const Matrix x = gaussian(20, 3, 1);
    const Labels labels(20, 0);
    const auto probe = train_probe(x, labels, 1);
    EXPECT_EQ(accuracy(probe, x, labels), 1.0);
}

TEST(Probe, OneDimensionalSeparable) {
    Matrix x(4, 1);
    x << -1, -1, 1, 1;
    const Labels labels{0, 0, 1, 1};
    const auto probe = train_probe(x, labels, 2);
    EXPECT_EQ(accuracy(probe, x, labels), 1.0);
    EXPECT_GT(probe.weights(1, 0), probe.weights(0, 0));
}

TEST(Probe, GradientMatchesFiniteDifferences) {
    const auto f = noisy_classes(30, 4, 3, 11);
    const Matrix w = gaussian(3, 4, 12) * 0.3;
    const Vector b = gaussian(3, 1, 13).col(0) * 0.3;
    const double ridge = 0.05, h = 1e-5;
    const auto g = probe_objective(f.x, f.labels, w, b, ridge);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        Matrix wp = w, wm = w;
        wp(i) += h;
        wm(i) -= h;
        const double fd = (probe_objective(f.x, f.labels, wp, b, ridge).loss -
                           probe_objective(f.x, f.labels, wm, b, ridge).loss) / (2 * h);
        EXPECT_NEAR(g.grad_weights(i), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        Vector bp = b, bm = b;
        bp(i) += h;
        bm(i) -= h;
        const double fd = (probe_objective(f.x, f.labels, w, bp, ridge).loss -
                           probe_objective(f.x, f.labels, w, bm, ridge).loss) / (2 * h);
        EXPECT_NEAR(g.grad_bias(i), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Probe, DeterministicFit) {
    const auto f = noisy_classes(300, 5, 4, 3);
    const auto a = train_probe(f.x, f.labels, 4);
    const auto b = train_probe(f.x, f.labels, 4);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.bias, b.bias);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Probe, MoreIterationsNeverIncreaseLoss) {
    const auto f = noisy_classes(400, 6, 5, 8);
    double previous = std::numeric_limits<double>::infinity();
    for (int iters : {1, 2, 4, 8, 16, 32, 64}) {
        TrainConfig cfg;
        cfg.max_iter = iters;
        const auto probe = train_probe(f.x, f.labels, 5, cfg);
        EXPECT_LE(probe.final_loss, previous + 1e-12) << iters;
        previous = probe.final_loss;
    }
}

TEST(Probe, ConvergesAndRecordsStopReason) {
    const auto f = noisy_classes(400, 6, 3, 9);
    const auto probe = train_probe(f.x, f.labels, 3);
    EXPECT_EQ(probe.stop, StopReason::GradientTolerance);
    EXPECT_LE(probe.grad_norm, 1e-6);
}

TEST(Probe, MissingClassStaysBelowPrior) {
    const auto f = noisy_classes(200, 4, 2, 5);
    const auto probe = train_probe(f.x, f.labels, 3);
    for (Label y : probe.predict(f.x)) {
        EXPECT_LT(y, 2u);
    }
}

TEST(Probe, ConfigValidation) {
    TrainConfig cfg;
    cfg.grad_tol = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.ridge = -1.0;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Accuracy, Examples) {
    Probe always_zero;
    always_zero.weights = Matrix::Zero(2, 1);
    always_zero.bias = Vector::Zero(2);
    const Matrix x = Matrix::Ones(3, 1);
    EXPECT_NEAR(accuracy(always_zero, x, {0, 0, 1}), 2.0 / 3.0, 1e-15);
    try {
        accuracy(always_zero, Matrix(0, 1), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InputValidation);
    }
    EXPECT_THROW(accuracy(always_zero, Matrix::Ones(3, 2), {0, 0, 1}), Error);
}

TEST(Majority, Examples) {
    EXPECT_NEAR(majority_baseline({0, 0, 1}), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(majority_baseline({0, 1, 2, 3, 3, 2, 1, 0}), 0.25, 1e-15);
    EXPECT_THROW(majority_baseline({}), Error);
}

TEST(Projection, Boundaries) {
    const Matrix x = gaussian(10, 4, 2);
    const auto zero = Projector::zero(4);
    EXPECT_EQ(project_features(zero, x, Side::Onto), Matrix::Zero(10, 4));
    const auto id = Projector::identity(4);
    EXPECT_EQ(project_features(id, x, Side::Complement), Matrix::Zero(10, 4));
    const auto p = orthogonal_projector(gaussian(4, 2, 3));
    const Matrix sum = project_features(p, x, Side::Onto) + project_features(p, x, Side::Complement);
    EXPECT_LE((sum - x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(project_features(p, Matrix::Ones(2, 3), Side::Onto), Error);
}

TEST(Projection, AmbientProbeMatchesReducedCoordinates) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto train = noisy_classes(600, 8, 3, 40 + seed);
        const auto test = noisy_classes(400, 8, 3, 80 + seed);
        const Matrix u = orthonormal_basis(gaussian(8, 3, 60 + seed));
        const auto p = projector_from_basis(u);
        const auto ambient = train_probe(project_features(p, train.x, Side::Onto), train.labels, 3);
        const auto reduced = train_probe(train.x * u, train.labels, 3);
        const double a = accuracy(ambient, project_features(p, test.x, Side::Onto), test.labels);
        const double r = accuracy(reduced, test.x * u, test.labels);
        EXPECT_NEAR(100.0 * a, 100.0 * r, 0.2) << seed;
    }
}
