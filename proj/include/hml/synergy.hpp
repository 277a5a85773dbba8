#pragma once

#include "hml/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hml {

// Calibration recording: one row of `q` per sample (radians), times in seconds.
struct PostureSeries {
  std::vector<double> time;
  Matrix q;  // samples x joints

  std::size_t samples() const { return static_cast<std::size_t>(q.rows()); }
  std::size_t joints() const { return static_cast<std::size_t>(q.cols()); }

  // Throws on non-increasing times, shape mismatch or non-finite entries.
  void validate() const;
};

struct PcaResult {
  Vector mean;
  Matrix components;  // one unit-norm component per row
  Vector eigenvalues;  // non-increasing, clamped at zero

  std::size_t joints() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t count() const { return static_cast<std::size_t>(components.rows()); }
};

struct SynergyBasis {
  Matrix phi;  // h x m, orthonormal rows

  std::size_t h() const { return static_cast<std::size_t>(phi.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(phi.cols()); }
};

struct MappingMatrix {
  Matrix c;  // n x m, full row rank

  std::size_t n() const { return static_cast<std::size_t>(c.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(c.cols()); }
};

struct WeightDecomposition {
  Matrix w;  // n x h
  double residual = 0.0;  // ||C - W Phi||_2 / ||C||_2
};

inline constexpr std::size_t kDefaultSynergies = 4;
inline constexpr std::size_t kCursorDims = 2;

// Sample-covariance PCA (N-1 normalization). Component signs are fixed so the entry of
// largest magnitude is positive.
PcaResult fit_pca(const PostureSeries& data);

// First `n` components scaled by sqrt(eigenvalue).
MappingMatrix build_mapping(const PcaResult& pca, std::size_t n = kCursorDims);

SynergyBasis extract_synergies(const PcaResult& pca, std::size_t h = kDefaultSynergies);

// Least-squares weights W = C Phi^T and the relative spectral residual.
WeightDecomposition decompose_weights(const MappingMatrix& c, const SynergyBasis& phi);

// Parameters of the synthetic calibration recording used by demos and tests: postures
// are mixtures of `generator_variances.size()` orthonormal synergy directions plus
// isotropic joint noise.
struct PostureSynthesis {
  std::size_t joints = 19;
  std::size_t samples = 5000;
  double sample_rate_hz = 60.0;
  std::vector<double> generator_variances{2.5, 1.6, 0.6, 0.35};
  double joint_noise_variance = 0.01;
  double smoothing = 0.9;  // AR(1) coefficient of the synergy activations
};

PostureSeries synthesize_postures(const PostureSynthesis& spec, std::uint64_t seed);

}  // namespace hml
