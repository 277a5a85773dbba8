#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace hml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Eigen-decomposition of a symmetric matrix, eigenvalues sorted non-increasing,
// eigenvectors stored as the matching columns.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

// Cyclic Jacobi rotations; stops once the off-diagonal Frobenius norm falls below
// `tolerance` times the matrix Frobenius norm (absolute when the matrix is zero).
SymmetricEigen jacobi_eigen(const Matrix& a, double tolerance = 1e-12, int max_sweeps = 100);

// Largest singular value, via the smaller of the two Gram matrices.
double spectral_norm(const Matrix& a);

// Orthogonal projector onto the row space of `a`, keeping singular directions with
// sigma > `cutoff`.
Matrix row_space_projector(const Matrix& a, double cutoff = 1e-10);

bool all_finite(const Matrix& a);

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what);

}  // namespace hml
