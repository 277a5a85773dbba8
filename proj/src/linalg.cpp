#include "hml/linalg.hpp"

#include "hml/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hml {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen(const Matrix& input, double tolerance, int max_sweeps) {
  if (input.rows() != input.cols())
    throw Error(ErrorKind::DimensionMismatch, "jacobi_eigen needs a square matrix");
  const Eigen::Index n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();
  const double threshold = scale > 0.0 ? tolerance * scale : tolerance;

  for (int sweep = 0; sweep < max_sweeps && off_diagonal_norm(a) > threshold; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the 2x2 subproblem, smaller root for stability.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Matrix gram = a.rows() <= a.cols() ? Matrix(a * a.transpose()) : Matrix(a.transpose() * a);
  if (gram.rows() == 1) return std::sqrt(std::max(0.0, gram(0, 0)));
  if (gram.rows() == 2) {
    const double tr = gram(0, 0) + gram(1, 1);
    const double diff = gram(0, 0) - gram(1, 1);
    const double disc = std::sqrt(diff * diff + 4.0 * gram(0, 1) * gram(1, 0));
    return std::sqrt(std::max(0.0, 0.5 * (tr + disc)));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

Matrix row_space_projector(const Matrix& a, double cutoff) {
  const Eigen::Index m = a.cols();
  Matrix p = Matrix::Zero(m, m);
  if (a.size() == 0) return p;
  // Row space of A is spanned by A^T v_i / sigma_i for the eigenpairs of A A^T.
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a * a.transpose());
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double sigma = std::sqrt(std::max(0.0, solver.eigenvalues()(i)));
    if (sigma <= cutoff) continue;
    const Vector basis = a.transpose() * solver.eigenvectors().col(i) / sigma;
    p.noalias() += basis * basis.transpose();
  }
  return p;
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::NonFiniteData: return "NonFiniteData";
    case ErrorKind::DegeneratePca: return "DegeneratePca";
    case ErrorKind::HOutOfRange: return "HOutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ZeroTrueMapping: return "ZeroTrueMapping";
    case ErrorKind::DegenerateChord: return "DegenerateChord";
    case ErrorKind::EmptyReplicates: return "EmptyReplicates";
    case ErrorKind::EmptyRuns: return "EmptyRuns";
    case ErrorKind::UnknownParameter: return "UnknownParameter";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace hml
