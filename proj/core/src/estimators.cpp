#include "csl/estimators.hpp"

#include "csl/error.hpp"
#include "csl/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace csl {

const char* to_string(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::Mlr: return "MLR";
    case EstimatorKind::Lda: return "LDA";
    case EstimatorKind::Cpca: return "CPCA";
    case EstimatorKind::Cov: return "COV";
    case EstimatorKind::Leace: return "LEACE";
    case EstimatorKind::Rand: return "RAND";
    }
    return "unknown";
}

EstimatorKind parse_estimator(const std::string& text) {
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    for (EstimatorKind kind : kAllEstimators) {
        if (upper == to_string(kind)) {
            return kind;
        }
    }
    throw Error(ErrorKind::Configuration, "unknown estimator '" + text + "'");
}

// ---------------------------------------------------------------------------
// moments

MomentAccumulator::MomentAccumulator(Eigen::Index dim, std::size_t num_classes)
    : mean_x_(Vector::Zero(dim)),
      mean_y_(Vector::Zero(static_cast<Eigen::Index>(num_classes))),
      scatter_xx_(Matrix::Zero(dim, dim)),
      scatter_xy_(Matrix::Zero(dim, static_cast<Eigen::Index>(num_classes))),
      class_sums_(Matrix::Zero(dim, static_cast<Eigen::Index>(num_classes))),
      class_counts_(Vector::Zero(static_cast<Eigen::Index>(num_classes))) {}

void MomentAccumulator::add(const Eigen::Ref<const Matrix>& rows, std::span<const Label> labels) {
    if (rows.cols() != dim() || static_cast<std::size_t>(rows.rows()) != labels.size()) {
        throw Error(ErrorKind::InputValidation, "moment chunk shape mismatch");
    }
    if (rows.rows() == 0) {
        return;
    }
    MomentAccumulator chunk(dim(), num_classes());
    const auto m = static_cast<double>(rows.rows());
    chunk.n_ = static_cast<std::size_t>(rows.rows());
    Matrix y = Matrix::Zero(rows.rows(), static_cast<Eigen::Index>(num_classes()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes()) {
            throw Error(ErrorKind::InputValidation, "moment chunk label out of range");
        }
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    chunk.mean_x_ = rows.colwise().sum().transpose() / m;
    chunk.mean_y_ = y.colwise().sum().transpose() / m;
    const Matrix xc = rows.rowwise() - chunk.mean_x_.transpose();
    const Matrix yc = y.rowwise() - chunk.mean_y_.transpose();
    chunk.scatter_xx_.noalias() = xc.transpose() * xc;
    chunk.scatter_xy_.noalias() = xc.transpose() * yc;
    chunk.class_sums_.noalias() = rows.transpose() * y;
    chunk.class_counts_ = y.colwise().sum().transpose();
    merge(chunk);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
    if (other.dim() != dim() || other.num_classes() != num_classes()) {
        throw Error(ErrorKind::InputValidation, "cannot merge moments of different shapes");
    }
    if (other.n_ == 0) {
        return;
    }
    if (n_ == 0) {
        *this = other;
        return;
    }
    const auto na = static_cast<double>(n_);
    const auto nb = static_cast<double>(other.n_);
    const double n = na + nb;
    const Vector dx = other.mean_x_ - mean_x_;
    const Vector dy = other.mean_y_ - mean_y_;
    const double w = na * nb / n;
    scatter_xx_ += other.scatter_xx_;
    scatter_xx_.noalias() += w * dx * dx.transpose();
    scatter_xy_ += other.scatter_xy_;
    scatter_xy_.noalias() += w * dx * dy.transpose();
    mean_x_ += dx * (nb / n);
    mean_y_ += dy * (nb / n);
    class_sums_ += other.class_sums_;
    class_counts_ += other.class_counts_;
    n_ += other.n_;
}

Matrix MomentAccumulator::cov_xx() const {
    Matrix c = scatter_xx_ / static_cast<double>(std::max<std::size_t>(n_, 1));
    return 0.5 * (c + c.transpose());
}

Matrix MomentAccumulator::cov_xy() const {
    return scatter_xy_ / static_cast<double>(std::max<std::size_t>(n_, 1));
}

Matrix MomentAccumulator::class_means() const {
    Matrix means = Matrix::Zero(dim(), class_sums_.cols());
    for (Eigen::Index c = 0; c < class_sums_.cols(); ++c) {
        if (class_counts_(c) > 0.0) {
            means.col(c) = class_sums_.col(c) / class_counts_(c);
        }
    }
    return means;
}

Matrix MomentAccumulator::between_class_cov() const {
    Matrix between = Matrix::Zero(dim(), dim());
    const Matrix means = class_means();
    for (Eigen::Index c = 0; c < means.cols(); ++c) {
        if (class_counts_(c) > 0.0) {
            const Vector delta = means.col(c) - mean_x_;
            between.noalias() += (class_counts_(c) / static_cast<double>(n_)) * delta * delta.transpose();
        }
    }
    return between;
}

Matrix MomentAccumulator::within_class_cov() const {
    Matrix within = cov_xx() - between_class_cov();
    return 0.5 * (within + within.transpose());
}

MomentAccumulator accumulate_moments(const Matrix& x, const Labels& labels, std::size_t num_classes,
                                     Eigen::Index chunk_rows) {
    if (x.rows() < 2) {
        throw Error(ErrorKind::InputValidation, "moments need at least two rows");
    }
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw Error(ErrorKind::InputValidation, "moments: row/label count mismatch");
    }
    chunk_rows = std::max<Eigen::Index>(chunk_rows, 1);
    MomentAccumulator acc(x.cols(), num_classes);
    for (Eigen::Index start = 0; start < x.rows(); start += chunk_rows) {
        const Eigen::Index len = std::min(chunk_rows, x.rows() - start);
        acc.add(x.middleRows(start, len),
                std::span<const Label>(labels).subspan(static_cast<std::size_t>(start),
                                                       static_cast<std::size_t>(len)));
    }
    return acc;
}

MomentAccumulator accumulate_moments(const LabeledDataset& ds, const std::string& concept_name,
                                     Eigen::Index chunk_rows) {
    const Concept& c = ds.get_concept(concept_name);
    return accumulate_moments(ds.features(), c.labels, c.num_classes(), chunk_rows);
}

// ---------------------------------------------------------------------------
// estimators

namespace {

void check_dim(std::optional<Eigen::Index> dim, Eigen::Index ambient) {
    if (!dim) {
        return;
    }
    if (*dim < 0) {
        throw Error(ErrorKind::Configuration, "requested subspace dimension must be >= 0");
    }
    if (*dim > ambient) {
        throw Error(ErrorKind::Dimension, "requested subspace dimension " + std::to_string(*dim) +
                                              " exceeds ambient dimension " + std::to_string(ambient));
    }
}

std::size_t classes_present(const Labels& labels, std::size_t num_classes) {
    std::vector<bool> seen(num_classes, false);
    std::size_t count = 0;
    for (Label y : labels) {
        if (!seen[y]) {
            seen[y] = true;
            ++count;
        }
    }
    return count;
}

void require_two_classes(const Concept& c, const char* who) {
    if (classes_present(c.labels, c.num_classes()) < 2) {
        throw Error(ErrorKind::InputValidation,
                    std::string(who) + ": concept '" + c.name + "' needs >= 2 classes present");
    }
}

bool degenerate_covariance(const MomentAccumulator& m, double lambda_max) {
    const double scale = std::max(1.0, m.mean_x().cwiseAbs().maxCoeff());
    return !(lambda_max > 1e-20 * scale * scale);
}

std::vector<double> to_std(const Vector& v) {
    return {v.data(), v.data() + v.size()};
}

ConceptSubspace make_subspace(Projector p, EstimatorKind kind, const std::string& concept_name,
                              std::optional<Eigen::Index> dim, FitStats stats) {
    ConceptSubspace s;
    s.projector = std::move(p);
    s.estimator = kind;
    s.concept_name = concept_name;
    s.requested_dim = dim;
    s.fit_stats = std::move(stats);
    s.fit_stats.scalars["rank"] = static_cast<double>(s.projector.rank());
    return s;
}

/// Orthogonal projector onto span(Y) with the rank-0 cutoff applied when
/// the largest singular value is negligible against `scale`.
Projector span_projector(const Matrix& y, double scale, const Tolerances& tol,
                         std::optional<Eigen::Index> dim, FitStats& stats) {
    const CompactSvd svd = compact_svd(y, tol.rel_tol);
    stats.singular_values = to_std(svd.s);
    const double s_max = svd.rank() > 0 ? svd.s(0) : 0.0;
    if (!(s_max > tol.rel_tol * scale)) {
        stats.notes.push_back("signal below tolerance; rank-0 subspace");
        return Projector::zero(y.rows());
    }
    Eigen::Index k = svd.rank();
    if (dim) {
        k = std::min(k, *dim);
    }
    return projector_from_basis(svd.u.leftCols(k));
}

}  // namespace

ConceptSubspace estimate_mlr(const LabeledDataset& ds, const std::string& concept_name,
                             const TrainConfig& train, std::optional<Eigen::Index> dim,
                             const Tolerances& tol) {
    const Concept& c = ds.get_concept(concept_name);
    require_two_classes(c, "MLR");
    check_dim(dim, ds.dim());
    const Probe probe = train_probe(ds.features(), c.labels, c.num_classes(), train);
    if (probe.stop == StopReason::MaxIterations) {
        std::ostringstream msg;
        msg << "MLR did not converge within " << train.max_iter << " iterations (max |grad| = "
            << std::setprecision(3) << probe.grad_norm << ", tolerance " << train.grad_tol << ")";
        throw FitError(probe.grad_norm, msg.str());
    }
    FitStats stats;
    stats.scalars["train_loss"] = probe.final_loss;
    stats.scalars["grad_norm"] = probe.grad_norm;
    stats.scalars["iterations"] = probe.iterations;
    stats.notes.push_back(std::string("stop=") + to_string(probe.stop));
    Projector p = span_projector(probe.weights.transpose(), 0.0, tol, dim, stats);
    stats.scalars["effective_rank"] = static_cast<double>(p.rank());
    return make_subspace(std::move(p), EstimatorKind::Mlr, concept_name, dim, std::move(stats));
}

ConceptSubspace estimate_lda(const LabeledDataset& ds, const std::string& concept_name,
                             std::optional<Eigen::Index> dim, const Tolerances& tol) {
    const Concept& c = ds.get_concept(concept_name);
    require_two_classes(c, "LDA");
    check_dim(dim, ds.dim());
    const MomentAccumulator m = accumulate_moments(ds, concept_name);
    const PsdRoots within = psd_roots(m.within_class_cov(), tol.rel_tol, tol.sym_tol);
    if (within.rank == 0 || degenerate_covariance(m, within.max_eigenvalue)) {
        throw Error(ErrorKind::DegenerateCovariance,
                    "LDA: within-class covariance of '" + concept_name + "' is zero");
    }
    const Matrix& s = within.inv_sqrt;
    const SymmetricEigen eig = sym_eig(s * m.between_class_cov() * s);
    FitStats stats;
    stats.singular_values = to_std(eig.values);
    stats.scalars["within_rank"] = static_cast<double>(within.rank);
    const double threshold = tol.rel_tol * std::max(eig.values.size() > 0 ? eig.values(0) : 0.0, 1.0);
    Eigen::Index k = 0;
    while (k < eig.values.size() && eig.values(k) > threshold) {
        ++k;
    }
    k = std::min<Eigen::Index>(k, static_cast<Eigen::Index>(c.num_classes()));
    if (dim) {
        k = std::min(k, *dim);
    }
    stats.scalars["effective_rank"] = static_cast<double>(k);
    Projector p = k == 0 ? Projector::zero(ds.dim())
                         : orthogonal_projector(s * eig.vectors.leftCols(k), tol.rel_tol, k);
    if (k == 0) {
        stats.notes.push_back("between-class covariance below tolerance; rank-0 subspace");
    }
    return make_subspace(std::move(p), EstimatorKind::Lda, concept_name, dim, std::move(stats));
}

ConceptSubspace estimate_cpca(const LabeledDataset& ds, const std::string& concept_name,
                              std::optional<Eigen::Index> dim, bool allow_missing_classes,
                              const Tolerances& tol) {
    const Concept& c = ds.get_concept(concept_name);
    check_dim(dim, ds.dim());
    std::vector<Vector> sums(c.num_classes(), Vector::Zero(ds.dim()));
    std::vector<std::size_t> counts(c.num_classes(), 0);
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
        sums[c.labels[i]] += ds.features().row(static_cast<Eigen::Index>(i)).transpose();
        ++counts[c.labels[i]];
    }
    std::vector<Vector> centroids;
    FitStats stats;
    for (std::size_t k = 0; k < c.num_classes(); ++k) {
        if (counts[k] == 0) {
            if (!allow_missing_classes) {
                throw Error(ErrorKind::InputValidation, "CPCA: class '" + c.class_names[k] +
                                                            "' of '" + concept_name + "' has no rows");
            }
            stats.notes.push_back("class " + c.class_names[k] + " absent; centroid skipped");
            continue;
        }
        centroids.push_back(sums[k] / static_cast<double>(counts[k]));
    }
    Matrix y(ds.dim(), static_cast<Eigen::Index>(centroids.size()));
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        y.col(static_cast<Eigen::Index>(k)) = centroids[k];
    }
    stats.scalars["centroids"] = static_cast<double>(centroids.size());
    Projector p = span_projector(y, 0.0, tol, dim, stats);
    return make_subspace(std::move(p), EstimatorKind::Cpca, concept_name, dim, std::move(stats));
}

ConceptSubspace estimate_cov(const LabeledDataset& ds, const std::string& concept_name,
                             std::optional<Eigen::Index> dim, const Tolerances& tol) {
    const Concept& c = ds.get_concept(concept_name);
    require_two_classes(c, "COV");
    check_dim(dim, ds.dim());
    const MomentAccumulator m = accumulate_moments(ds, concept_name);
    const Matrix cov_xx = m.cov_xx();
    const double x_scale = std::sqrt(std::max(sym_eig(cov_xx).values(0), 0.0));
    FitStats stats;
    Projector p = span_projector(m.cov_xy(), x_scale, tol, dim, stats);
    // columns of cov_xy sum to zero, so the rank is at most C - 1
    stats.scalars["max_rank"] = static_cast<double>(c.num_classes() - 1);
    if (!stats.singular_values.empty() && x_scale > 0.0) {
        const double normalized = stats.singular_values.front() / (0.5 * x_scale);
        stats.scalars["normalized_signal"] = normalized;
        if (p.rank() > 0 && normalized < 3.0 / std::sqrt(static_cast<double>(m.count()))) {
            stats.notes.push_back("near-degenerate: cross-covariance at sampling-noise level");
        }
    }
    return make_subspace(std::move(p), EstimatorKind::Cov, concept_name, dim, std::move(stats));
}

ConceptSubspace leace_from_moments(const MomentAccumulator& m, const std::string& concept_name,
                                   std::optional<Eigen::Index> dim, const Tolerances& tol) {
    check_dim(dim, m.dim());
    if (m.count() < 2) {
        throw Error(ErrorKind::InputValidation, "LEACE needs at least two rows");
    }
    const Matrix cov_xx = m.cov_xx();
    const PsdRoots roots = psd_roots(cov_xx, tol.rel_tol, tol.sym_tol);
    if (roots.rank == 0 || degenerate_covariance(m, roots.max_eigenvalue)) {
        throw Error(ErrorKind::DegenerateCovariance,
                    "LEACE: feature covariance is numerically zero");
    }
    const Matrix& whiten = roots.inv_sqrt;
    const Matrix& unwhiten = roots.sqrt;
    const Matrix whitened_cross = whiten * m.cov_xy();

    FitStats stats;
    stats.scalars["covariance_rank"] = static_cast<double>(roots.rank);
    const CompactSvd svd = compact_svd(whitened_cross, tol.rel_tol);
    stats.singular_values = to_std(svd.s);
    Eigen::Index k = svd.rank();
    if (k > 0 && !(svd.s(0) > tol.rel_tol)) {
        stats.notes.push_back("whitened cross-covariance below tolerance; rank-0 subspace");
        k = 0;
    }
    if (dim) {
        k = std::min(k, *dim);
    }
    Matrix u = svd.u.leftCols(k);
    if (dim && *dim > k) {
        // complete the basis inside the whitened range of cov_xx
        const Matrix range = whiten * unwhiten;
        const Matrix residual = 0.5 * (range + range.transpose()) - u * u.transpose();
        const SymmetricEigen eig = sym_eig(residual);
        Eigen::Index available = 0;
        while (available < eig.values.size() && eig.values(available) > 0.5) {
            ++available;
        }
        const Eigen::Index extra = std::min(*dim - k, available);
        if (extra > 0) {
            Matrix completed(u.rows(), k + extra);
            completed << u, eig.vectors.leftCols(extra);
            u = std::move(completed);
        }
        stats.scalars["completed_dims"] = static_cast<double>(extra);
        if (*dim - k > extra) {
            stats.notes.push_back("requested dim exceeds covariance rank; capped");
        }
    }
    Matrix p = unwhiten * u * (u.transpose() * whiten);
    Projector projector = u.cols() == 0 ? Projector::zero(m.dim()) : oblique_projector(p, tol);
    stats.scalars["effective_rank"] = static_cast<double>(projector.rank());
    return make_subspace(std::move(projector), EstimatorKind::Leace, concept_name, dim, std::move(stats));
}

ConceptSubspace estimate_leace(const LabeledDataset& ds, const std::string& concept_name,
                               std::optional<Eigen::Index> dim, const Tolerances& tol) {
    const Concept& c = ds.get_concept(concept_name);
    require_two_classes(c, "LEACE");
    return leace_from_moments(accumulate_moments(ds, concept_name), concept_name, dim, tol);
}

ConceptSubspace estimate_rand(Eigen::Index ambient_dim, std::size_t num_classes, std::uint64_t seed,
                              std::optional<Eigen::Index> dim, const Tolerances& tol) {
    if (num_classes < 1) {
        throw Error(ErrorKind::InputValidation, "RAND needs at least one class");
    }
    check_dim(dim, ambient_dim);
    const Eigen::Index cols = dim ? *dim : static_cast<Eigen::Index>(num_classes);
    if (cols > ambient_dim) {
        throw Error(ErrorKind::Dimension, "RAND: " + std::to_string(cols) +
                                              " random directions exceed ambient dimension " +
                                              std::to_string(ambient_dim));
    }
    Xoshiro256 rng(seed, 0x5A4D);
    const double sd = 1.0 / std::sqrt(static_cast<double>(num_classes));
    Matrix y(ambient_dim, cols);
    for (Eigen::Index i = 0; i < ambient_dim; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            y(i, j) = sd * rng.normal();
        }
    }
    FitStats stats;
    Projector p = cols == 0 ? Projector::zero(ambient_dim) : orthogonal_projector(y, tol.rel_tol);
    ConceptSubspace s = make_subspace(std::move(p), EstimatorKind::Rand, {}, dim, std::move(stats));
    s.seed = seed;
    return s;
}

ConceptSubspace estimate(EstimatorKind kind, const LabeledDataset& ds, const std::string& concept_name,
                         const EstimatorConfig& config) {
    ConceptSubspace s;
    switch (kind) {
    case EstimatorKind::Mlr:
        s = estimate_mlr(ds, concept_name, config.probe, config.dim, config.tol);
        break;
    case EstimatorKind::Lda:
        s = estimate_lda(ds, concept_name, config.dim, config.tol);
        break;
    case EstimatorKind::Cpca:
        s = estimate_cpca(ds, concept_name, config.dim, config.allow_missing_classes, config.tol);
        break;
    case EstimatorKind::Cov:
        s = estimate_cov(ds, concept_name, config.dim, config.tol);
        break;
    case EstimatorKind::Leace:
        s = estimate_leace(ds, concept_name, config.dim, config.tol);
        break;
    case EstimatorKind::Rand:
        s = estimate_rand(ds.dim(), ds.get_concept(concept_name).num_classes(), config.seed, config.dim, config.tol);
        s.concept_name = concept_name;
        break;
    }
    s.provenance = ds.provenance();
    return s;
}

}  // namespace csl
