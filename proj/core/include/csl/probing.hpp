#pragma once

#include "csl/dataset.hpp"
#include "csl/linalg.hpp"
#include "csl/subspace.hpp"

#include <cstdint>
#include <string>

namespace csl {

struct TrainConfig {
    double ridge = 1e-4;
    int max_iter = 1000;
    double grad_tol = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class StopReason { GradientTolerance, MaxIterations, LineSearchStalled };

const char* to_string(StopReason reason);

/// Multinomial logistic regression p(y|x) ∝ exp(W x + b).
struct Probe {
    Matrix weights;     // C x D_in
    Vector bias;        // C
    TrainConfig config;
    double final_loss = 0.0;
    double grad_norm = 0.0;   // max-norm of the full gradient at the end
    int iterations = 0;
    StopReason stop = StopReason::MaxIterations;

    std::size_t classes() const { return static_cast<std::size_t>(weights.rows()); }
    Eigen::Index input_dim() const { return weights.cols(); }

    /// argmax of class scores, ties to the lowest class index.
    Labels predict(const Matrix& x) const;
};

/// Objective value and gradient of mean cross-entropy + (ridge/2)|W|^2.
struct LossGradient {
    double loss = 0.0;
    Matrix grad_weights;
    Vector grad_bias;
};

LossGradient probe_objective(const Matrix& x, const Labels& labels, const Matrix& weights,
                             const Vector& bias, double ridge);

/// Deterministic full-batch L-BFGS from W = 0 and log-prior biases. Stops
/// when max |gradient| <= grad_tol, after max_iter iterations, or when the
/// line search can make no further progress.
Probe train_probe(const Matrix& x, const Labels& labels, std::size_t num_classes,
                  const TrainConfig& config = {});

/// Fraction of rows whose prediction matches the label.
double accuracy(const Probe& probe, const Matrix& x, const Labels& labels);

/// Largest class frequency divided by N.
double majority_baseline(const Labels& labels);

enum class Side { Onto, Complement };

/// X P^T (onto) or X (I - P)^T (complement); output stays D-dimensional.
Matrix project_features(const ConceptSubspace& s, const Matrix& x, Side side);
Matrix project_features(const Projector& p, const Matrix& x, Side side);

}  // namespace csl
