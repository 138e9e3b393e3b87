#include "csl/linalg.hpp"

#include "csl/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace csl {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InputValidation: return "input_validation";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::NotPsd: return "not_psd";
    case ErrorKind::DegenerateCovariance: return "degenerate_covariance";
    case ErrorKind::Fit: return "fit";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Numerical:
    case ErrorKind::NotPsd:
    case ErrorKind::DegenerateCovariance:
    case ErrorKind::Fit:
        return 3;
    case ErrorKind::Format:
    case ErrorKind::Io:
        return 4;
    default:
        return 2;
    }
}

namespace {

std::string shape(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace

void require_finite(const Matrix& a, const std::string& what) {
    if (!a.allFinite()) {
        throw Error(ErrorKind::InputValidation, what + " contains non-finite entries");
    }
}

Vector canonicalize_signs(Matrix& columns) {
    Vector signs = Vector::Ones(columns.cols());
    for (Eigen::Index j = 0; j < columns.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < columns.rows(); ++i) {
            const double mag = std::abs(columns(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (columns.rows() > 0 && columns(arg, j) < 0.0) {
            columns.col(j) = -columns.col(j);
            signs(j) = -1.0;
        }
    }
    return signs;
}

CompactSvd compact_svd(const Matrix& a, double rel_tol) {
    require_finite(a, "compact_svd input");
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw Error(ErrorKind::InputValidation, "compact_svd: rel_tol must lie in (0, 1)");
    }
    CompactSvd out;
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
        out.u = Matrix(a.rows(), 0);
        out.s = Vector(0);
        out.v = Matrix(a.cols(), 0);
        return out;
    }

    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw Error(ErrorKind::Numerical, "SVD failed to converge on a " + shape(a) + " matrix");
    }
    const Vector& s = svd.singularValues();
    const double s_max = s(0);
    Eigen::Index k = 0;
    while (k < s.size() && s(k) > rel_tol * s_max) {
        ++k;
    }
    out.u = svd.matrixU().leftCols(k);
    out.s = s.head(k);
    out.v = svd.matrixV().leftCols(k);
    const Vector signs = canonicalize_signs(out.u);
    out.v = out.v * signs.asDiagonal();
    return out;
}

SymmetricEigen sym_eig(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorKind::InputValidation,
                    "sym_eig: matrix must be square, got " + shape(a));
    }
    require_finite(a, "sym_eig input");
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::Numerical,
                    "symmetric eigensolver failed on a " + shape(a) + " matrix");
    }
    SymmetricEigen out;
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    canonicalize_signs(out.vectors);
    return out;
}

PsdRoots psd_roots(const Matrix& a, double rel_tol, double sym_tol) {
    const SymmetricEigen eig = sym_eig(a);
    PsdRoots out;
    const Eigen::Index n = a.rows();
    out.inv_sqrt = Matrix::Zero(n, n);
    out.sqrt = Matrix::Zero(n, n);
    if (n == 0) {
        return out;
    }
    const double lambda_max = eig.values(0);
    out.max_eigenvalue = std::max(lambda_max, 0.0);
    const double lambda_min = eig.values(n - 1);
    if (lambda_min < -sym_tol * std::max(std::abs(lambda_max), std::abs(lambda_min))) {
        throw Error(ErrorKind::NotPsd,
                    "matrix is not positive semi-definite: eigenvalue " +
                        std::to_string(lambda_min) + " vs largest " + std::to_string(lambda_max));
    }
    if (lambda_max <= 0.0) {
        return out;
    }
    Eigen::Index k = 0;
    while (k < n && eig.values(k) > rel_tol * lambda_max) {
        ++k;
    }
    const Matrix v = eig.vectors.leftCols(k);
    const Vector root = eig.values.head(k).cwiseSqrt();
    out.inv_sqrt = v * root.cwiseInverse().asDiagonal() * v.transpose();
    out.sqrt = v * root.asDiagonal() * v.transpose();
    out.rank = k;
    return out;
}

Matrix inv_sqrt(const Matrix& a, double rel_tol) {
    return psd_roots(a, rel_tol).inv_sqrt;
}

Projector::Projector(Matrix onto, Eigen::Index rank, bool oblique)
    : onto_(std::move(onto)), rank_(rank), oblique_(oblique) {
    complement_ = Matrix::Identity(onto_.rows(), onto_.cols()) - onto_;
}

Projector Projector::zero(Eigen::Index dim) {
    return Projector(Matrix::Zero(dim, dim), 0, false);
}

Projector Projector::identity(Eigen::Index dim) {
    return Projector(Matrix::Identity(dim, dim), dim, false);
}

double Projector::idempotency_residual() const {
    if (onto_.size() == 0) {
        return 0.0;
    }
    return (onto_ * onto_ - onto_).cwiseAbs().maxCoeff();
}

double Projector::symmetry_residual() const {
    if (onto_.size() == 0) {
        return 0.0;
    }
    return (onto_ - onto_.transpose()).cwiseAbs().maxCoeff();
}

Projector projector_from_basis(const Matrix& basis) {
    Matrix p = basis * basis.transpose();
    return Projector(std::move(p), basis.cols(), false);
}

Projector orthogonal_projector(const Matrix& y, double rel_tol, Eigen::Index max_rank) {
    CompactSvd svd = compact_svd(y, rel_tol);
    Eigen::Index k = svd.rank();
    if (max_rank >= 0) {
        k = std::min(k, max_rank);
    }
    const Matrix u = svd.u.leftCols(k);
    Matrix p = u * u.transpose();
    return Projector(std::move(p), k, false);
}

Projector Projector::restore(Matrix onto, bool oblique, const Tolerances& tol) {
    if (!oblique) {
        const double asym =
            onto.size() == 0 ? 0.0 : (onto - onto.transpose()).cwiseAbs().maxCoeff();
        if (asym > tol.proj_tol) {
            throw ProjectorError(asym, "projector flagged orthogonal is not symmetric: max |P - P^T| = " +
                                           std::to_string(asym));
        }
    }
    Projector p = oblique_projector(onto, tol);
    p.oblique_ = oblique;
    return p;
}

Projector oblique_projector(const Matrix& p_onto, const Tolerances& tol) {
    if (p_onto.rows() != p_onto.cols()) {
        throw Error(ErrorKind::InputValidation,
                    "oblique_projector: matrix must be square, got " + shape(p_onto));
    }
    require_finite(p_onto, "oblique_projector input");
    const double residual =
        p_onto.size() == 0 ? 0.0 : (p_onto * p_onto - p_onto).cwiseAbs().maxCoeff();
    if (residual > tol.proj_tol) {
        throw ProjectorError(residual, "matrix is not idempotent: max |P*P - P| = " +
                                           std::to_string(residual));
    }
    const Eigen::Index rank = compact_svd(p_onto, tol.rel_tol).rank();
    return Projector(p_onto, rank, true);
}

Matrix orthonormal_basis(const Matrix& a, double rel_tol) {
    return compact_svd(a, rel_tol).u;
}

Vector principal_angles(const Matrix& a, const Matrix& b, double rel_tol) {
    const Matrix qa = orthonormal_basis(a, rel_tol);
    const Matrix qb = orthonormal_basis(b, rel_tol);
    const Eigen::Index k = std::min(qa.cols(), qb.cols());
    Vector angles(k);
    if (k == 0) {
        return angles;
    }
    const Matrix cross = qa.transpose() * qb;
    Eigen::JacobiSVD<Matrix> svd(cross);
    const Vector cosines = svd.singularValues();
    // descending cosines -> ascending angles
    for (Eigen::Index i = 0; i < k; ++i) {
        angles(i) = std::acos(std::clamp(cosines(i), -1.0, 1.0));
    }
    return angles;
}

}  // namespace csl
