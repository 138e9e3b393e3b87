#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace csl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Numerical tolerances shared by every estimator.
///
/// rel_tol decides ranks relative to the largest singular or eigen value;
/// proj_tol bounds |P*P - P| and |P - P^T|; sym_tol bounds acceptable
/// asymmetry and negative eigenvalues (relative); eig_tol bounds
/// eigen-residuals (relative).
struct Tolerances {
    double rel_tol = 1e-6;
    double proj_tol = 1e-6;
    double sym_tol = 1e-8;
    double eig_tol = 1e-8;
};

inline constexpr Tolerances kDefaultTolerances{};

struct CompactSvd {
    Matrix u;    // m x k, orthonormal columns
    Vector s;    // k, strictly positive, descending
    Matrix v;    // n x k, orthonormal columns

    Eigen::Index rank() const { return s.size(); }
};

struct SymmetricEigen {
    Vector values;    // descending
    Matrix vectors;   // columns, orthonormal
};

/// Pseudo-inverse square root of a PSD matrix together with its inverse on
/// the range: inv_sqrt * sqrt is the orthogonal projector onto range(A).
struct PsdRoots {
    Matrix inv_sqrt;
    Matrix sqrt;
    Eigen::Index rank = 0;
    double max_eigenvalue = 0.0;
};

/// Throws InputValidation if any entry is NaN or infinite.
void require_finite(const Matrix& a, const std::string& what);

/// Flip each column so its largest-magnitude entry is positive (first one
/// wins on ties). Returns the applied signs.
Vector canonicalize_signs(Matrix& columns);

/// Thin SVD keeping singular values strictly above rel_tol * s_max.
/// A zero matrix yields zero-width factors.
CompactSvd compact_svd(const Matrix& a, double rel_tol = kDefaultTolerances.rel_tol);

/// Eigendecomposition of (A + A^T)/2, eigenvalues in descending order.
SymmetricEigen sym_eig(const Matrix& a);

/// Both pseudo-roots of a PSD matrix. Eigenvalues at or below
/// rel_tol * lambda_max are treated as zero. Throws NotPsd when an
/// eigenvalue lies below -sym_tol * lambda_max.
PsdRoots psd_roots(const Matrix& a, double rel_tol = kDefaultTolerances.rel_tol,
                   double sym_tol = kDefaultTolerances.sym_tol);

/// A^{-1/2} in the pseudo-inverse sense.
Matrix inv_sqrt(const Matrix& a, double rel_tol = kDefaultTolerances.rel_tol);

/// Linear projector P together with its complement I - P.
class Projector {
public:
    /// Rank-0 projector on a dim-dimensional space.
    static Projector zero(Eigen::Index dim);
    /// The identity projector.
    static Projector identity(Eigen::Index dim);
    /// Wrap a stored projector matrix verbatim after checking idempotency
    /// (and symmetry unless oblique). Rank comes from the SVD of P.
    static Projector restore(Matrix onto, bool oblique, const Tolerances& tol = kDefaultTolerances);

    Eigen::Index dim() const { return onto_.rows(); }
    const Matrix& onto() const { return onto_; }
    const Matrix& complement() const { return complement_; }
    Eigen::Index rank() const { return rank_; }
    bool oblique() const { return oblique_; }
    bool degenerate() const { return rank_ == 0; }

    /// max |P*P - P|
    double idempotency_residual() const;
    /// max |P - P^T|
    double symmetry_residual() const;

private:
    friend Projector orthogonal_projector(const Matrix&, double, Eigen::Index);
    friend Projector oblique_projector(const Matrix&, const Tolerances&);
    friend Projector projector_from_basis(const Matrix&);

    Projector(Matrix onto, Eigen::Index rank, bool oblique);

    Matrix onto_;
    Matrix complement_;
    Eigen::Index rank_ = 0;
    bool oblique_ = false;
};

/// P = U U^T with U the left singular vectors of Y kept by compact_svd.
/// When max_rank >= 0 only the leading max_rank directions are used.
Projector orthogonal_projector(const Matrix& y, double rel_tol = kDefaultTolerances.rel_tol,
                               Eigen::Index max_rank = -1);

/// P = U U^T for a basis U already known to have orthonormal columns.
Projector projector_from_basis(const Matrix& orthonormal_basis);

/// Wraps an idempotent, possibly non-symmetric matrix. Throws ProjectorError
/// when max |P*P - P| exceeds tol.proj_tol.
Projector oblique_projector(const Matrix& p_onto, const Tolerances& tol = kDefaultTolerances);

/// Principal angles (radians, ascending) between the column spaces of a and b.
Vector principal_angles(const Matrix& a, const Matrix& b,
                        double rel_tol = kDefaultTolerances.rel_tol);

/// Orthonormal basis for the column space of a (left singular vectors).
Matrix orthonormal_basis(const Matrix& a, double rel_tol = kDefaultTolerances.rel_tol);

}  // namespace csl
