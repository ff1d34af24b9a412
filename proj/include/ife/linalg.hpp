#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace ife {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Orthogonal projector onto the column span of a matrix and its complement.
struct ProjectorPair {
    Matrix p;
    Matrix m;
};

/// Truncation kernel: weight 1 for |lag| <= bandwidth, else 0.
struct KernelConfig {
    int bandwidth = 1;
};

/// Top-r eigenvectors of a symmetric matrix, with the full descending spectrum.
struct TopEigvecs {
    Matrix vectors;       // p x r, orthonormal columns
    Vector eigenvalues;   // all p eigenvalues, descending
    bool degenerate_gap = false;
};

void require_finite(const Matrix& a, std::string_view what);

/// P = A (A'A)^+ A' and M = I - P. Rank-deficient and zero-column inputs are allowed.
ProjectorPair projectors(const Matrix& a);

/// Sum of the p - r smallest eigenvalues of a symmetric p x p matrix.
double eig_tail_sum(const Matrix& s, Index r);

/// Eigenvectors of the r largest eigenvalues. Each column is signed so its
/// largest-magnitude entry is positive. The gap flag fires when
/// mu_r - mu_{r+1} < gap_tol.
TopEigvecs top_eigvecs(const Matrix& s, Index r, double gap_tol = 1e-12);

double kernel_weight(long lag, KernelConfig cfg);

// Helpers shared by the estimation code.

/// Symmetric check at relative tolerance 1e-8, then (s + s')/2.
Matrix symmetrized(const Matrix& s);

/// Descending eigenvalues of a symmetric matrix.
Vector eigenvalues_desc(const Matrix& s);

/// Tail eigen-sum of Z'Z (equivalently ZZ'), computed on the smaller Gram matrix.
/// r is clipped to the Gram dimension.
double gram_tail_sum(const Matrix& z, Index r);

/// Fix the sign of every column so its largest-magnitude entry is positive.
void apply_sign_convention(Matrix& v);

/// Inverse of a symmetric positive definite matrix with a condition-number guard.
/// Throws NumericalError naming `what` if cond > max_cond or the matrix is not PD.
Matrix spd_inverse(const Matrix& a, std::string_view what, double max_cond = 1e12);

/// Orthonormal basis of the column span (numeric rank by SVD threshold).
Matrix orthonormal_basis(const Matrix& a);

/// M_A X = X - P_A X without forming the n x n projector.
Matrix annihilate_left(const Matrix& a, const Matrix& x);

/// Moore-Penrose pseudoinverse of a small symmetric matrix.
Matrix pinv_symmetric(const Matrix& a);

/// Frobenius inner product sum_ij a_ij b_ij.
inline double frob_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

}  // namespace ife
