#pragma once

#include "csl/dataset.hpp"
#include "csl/linalg.hpp"
#include "csl/probing.hpp"
#include "csl/subspace.hpp"

#include <optional>
#include <span>
#include <string>

namespace csl {

/// Streaming first and second moments of (x, one_hot(y)) with 1/n
/// normalization. Chunks are folded in with the pairwise mean/comoment
/// update, so the merge order (and result) is fixed by the input order.
class MomentAccumulator {
public:
    MomentAccumulator(Eigen::Index dim, std::size_t num_classes);

    /// Fold a block of rows into the running moments.
    void add(const Eigen::Ref<const Matrix>& rows, std::span<const Label> labels);
    void merge(const MomentAccumulator& other);

    std::size_t count() const { return n_; }
    Eigen::Index dim() const { return mean_x_.size(); }
    std::size_t num_classes() const { return static_cast<std::size_t>(mean_y_.size()); }

    const Vector& mean_x() const { return mean_x_; }
    /// Class frequencies (mean of the one-hot vectors).
    const Vector& mean_y() const { return mean_y_; }
    Matrix cov_xx() const;
    Matrix cov_xy() const;
    const Vector& class_counts() const { return class_counts_; }
    /// D x C raw per-class sums.
    const Matrix& class_sums() const { return class_sums_; }

    /// D x C class means; columns of empty classes are zero.
    Matrix class_means() const;
    /// sum_c p_c (mu_c - mu)(mu_c - mu)^T
    Matrix between_class_cov() const;
    /// cov_xx - between_class_cov
    Matrix within_class_cov() const;

private:
    std::size_t n_ = 0;
    Vector mean_x_;
    Vector mean_y_;
    Matrix scatter_xx_;
    Matrix scatter_xy_;
    Matrix class_sums_;
    Vector class_counts_;
};

/// One pass over the dataset in fixed-size chunks. Requires N >= 2.
MomentAccumulator accumulate_moments(const LabeledDataset& ds, const std::string& concept_name,
                                     Eigen::Index chunk_rows = 4096);
MomentAccumulator accumulate_moments(const Matrix& x, const Labels& labels,
                                     std::size_t num_classes, Eigen::Index chunk_rows = 4096);

struct EstimatorConfig {
    TrainConfig probe;                 // MLR only
    Tolerances tol;
    std::optional<Eigen::Index> dim;   // keep the leading `dim` directions
    std::uint64_t seed = 0;            // RAND only
    /// CPCA: fit on the classes present instead of rejecting empty ones.
    bool allow_missing_classes = false;
};

ConceptSubspace estimate_mlr(const LabeledDataset& ds, const std::string& concept_name,
                             const TrainConfig& train = {}, std::optional<Eigen::Index> dim = {},
                             const Tolerances& tol = kDefaultTolerances);

/// Directions S v_i where S = Sigma_within^{-1/2} and v_i the leading
/// eigenvectors of S Sigma_between S.
ConceptSubspace estimate_lda(const LabeledDataset& ds, const std::string& concept_name,
                             std::optional<Eigen::Index> dim = {},
                             const Tolerances& tol = kDefaultTolerances);

/// Span of the (uncentered) class centroids.
ConceptSubspace estimate_cpca(const LabeledDataset& ds, const std::string& concept_name,
                              std::optional<Eigen::Index> dim = {},
                              bool allow_missing_classes = false,
                              const Tolerances& tol = kDefaultTolerances);

/// Column space of cov(x, one_hot(y)).
ConceptSubspace estimate_cov(const LabeledDataset& ds, const std::string& concept_name,
                             std::optional<Eigen::Index> dim = {},
                             const Tolerances& tol = kDefaultTolerances);

/// Oblique P = W^+ U U^T W with W = cov_xx^{-1/2} and U the left singular
/// vectors of W cov_xy. With `dim`, U keeps the top `dim` directions; if
/// fewer exist it is completed inside the whitened range of cov_xx.
ConceptSubspace estimate_leace(const LabeledDataset& ds, const std::string& concept_name,
                               std::optional<Eigen::Index> dim = {},
                               const Tolerances& tol = kDefaultTolerances);

/// LEACE projector straight from moments; the dataset overload wraps this.
ConceptSubspace leace_from_moments(const MomentAccumulator& moments, const std::string& concept_name,
                                   std::optional<Eigen::Index> dim = {},
                                   const Tolerances& tol = kDefaultTolerances);

/// Span of a D x C matrix with i.i.d. N(0, 1/C) entries (C replaced by dim
/// when given).
ConceptSubspace estimate_rand(Eigen::Index ambient_dim, std::size_t num_classes, std::uint64_t seed,
                              std::optional<Eigen::Index> dim = {},
                              const Tolerances& tol = kDefaultTolerances);

/// Dispatch on the estimator kind.
ConceptSubspace estimate(EstimatorKind kind, const LabeledDataset& ds, const std::string& concept_name,
                         const EstimatorConfig& config = {});

}  // namespace csl
