#include "ife/linalg.hpp"

#include "ife/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ife {

void require_finite(const Matrix& a, std::string_view what) {
    if (!a.allFinite()) {
        throw ValidationError(std::string(what) + ": non-finite entries");
    }
}

Matrix orthonormal_basis(const Matrix& a) {
    if (a.cols() == 0 || a.rows() == 0) {
        return Matrix(a.rows(), 0);
    }
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    if (smax == 0.0) {
        return Matrix(a.rows(), 0);
    }
    const double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
                       std::numeric_limits<double>::epsilon() * smax;
    Index rank = 0;
    while (rank < sv.size() && sv(rank) > tol) {
        ++rank;
    }
    return svd.matrixU().leftCols(rank);
}

Matrix annihilate_left(const Matrix& a, const Matrix& x) {
    const Matrix u = orthonormal_basis(a);
    if (u.cols() == 0) {
        return x;
    }
    return x - u * (u.transpose() * x);
}

Matrix pinv_symmetric(const Matrix& a) {
    if (a.rows() == 0) {
        return Matrix(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Vector& mu = es.eigenvalues();
    const double tol = static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon() *
                       mu.cwiseAbs().maxCoeff();
    Vector inv(mu.size());
    for (Index i = 0; i < mu.size(); ++i) inv(i) = std::abs(mu(i)) > tol ? 1.0 / mu(i) : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

ProjectorPair projectors(const Matrix& a) {
    require_finite(a, "projectors");
    const Index n = a.rows();
    ProjectorPair out{Matrix::Zero(n, n), Matrix::Identity(n, n)};
    const Matrix u = orthonormal_basis(a);
    if (u.cols() == 0) {
        return out;
    }
    out.p = u * u.transpose();
    out.p = 0.5 * (out.p + out.p.transpose());
    out.m = Matrix::Identity(n, n) - out.p;
    return out;
}

Matrix symmetrized(const Matrix& s) {
    if (s.rows() != s.cols()) {
        throw ValidationError("expected a square matrix");
    }
    require_finite(s, "symmetric matrix");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw ValidationError("matrix is not symmetric within 1e-8");
    }
    return 0.5 * (s + s.transpose());
}

Vector eigenvalues_desc(const Matrix& s) {
    if (s.rows() == 0) {
        return Vector(0);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().reverse();
}

double eig_tail_sum(const Matrix& s, Index r) {
    const Matrix sym = symmetrized(s);
    const Index p = sym.rows();
    if (r < 0 || r > p) {
        throw ValidationError("eig_tail_sum: r must lie in [0, p]");
    }
    if (r == p) {
        return 0.0;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    // ascending order: the tail is the first p - r entries
    return es.eigenvalues().head(p - r).sum();
}

void apply_sign_convention(Matrix& v) {
    for (Index j = 0; j < v.cols(); ++j) {
        Index imax = 0;
        v.col(j).cwiseAbs().maxCoeff(&imax);
        if (v(imax, j) < 0.0) {
            v.col(j) *= -1.0;
        }
    }
}

TopEigvecs top_eigvecs(const Matrix& s, Index r, double gap_tol) {
    const Matrix sym = symmetrized(s);
    const Index p = sym.rows();
    if (r < 0 || r > p) {
        throw ValidationError("top_eigvecs: r must lie in [0, p]");
    }
    TopEigvecs out;
    if (p == 0) {
        out.vectors = Matrix(0, 0);
        out.eigenvalues = Vector(0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    out.eigenvalues = es.eigenvalues().reverse();
    out.vectors = es.eigenvectors().rightCols(r).rowwise().reverse();
    apply_sign_convention(out.vectors);
    if (r > 0 && r < p) {
        out.degenerate_gap = out.eigenvalues(r - 1) - out.eigenvalues(r) < gap_tol;
    }
    return out;
}

double kernel_weight(long lag, KernelConfig cfg) {
    return std::labs(lag) <= cfg.bandwidth ? 1.0 : 0.0;
}

double gram_tail_sum(const Matrix& z, Index r) {
    const bool time_side = z.cols() <= z.rows();
    Matrix g = time_side ? Matrix(z.transpose() * z) : Matrix(z * z.transpose());
    g = 0.5 * (g + g.transpose());
    const Index p = g.rows();
    const Index q = std::min(std::max<Index>(r, 0), p);
    if (q == p) {
        return 0.0;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().head(p - q).sum();
}

Matrix spd_inverse(const Matrix& a, std::string_view what, double max_cond) {
    const Index k = a.rows();
    if (k == 0) {
        return Matrix(0, 0);
    }
    if (!a.allFinite()) {
        throw NumericalError(std::string(what) + ": non-finite entries");
    }
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const Vector& mu = es.eigenvalues();
    const double lo = mu(0);
    const double hi = mu(k - 1);
    if (!(hi > 0.0) || !(lo > 0.0) || hi / lo > max_cond) {
        throw NumericalError(std::string(what) +
                             " is singular or ill-conditioned (condition number > 1e12); "
                             "check the regressors for collinearity");
    }
    return es.eigenvectors() * mu.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace ife
