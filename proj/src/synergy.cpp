#include "hml/synergy.hpp"

#include "hml/error.hpp"
#include "hml/rng.hpp"

#include <cmath>
#include <string>

namespace hml {

void PostureSeries::validate() const {
  if (time.size() != samples())
    throw Error(ErrorKind::DimensionMismatch, "time column length differs from sample count");
  if (joints() < 1) throw Error(ErrorKind::DimensionMismatch, "posture data has no joints");
  for (std::size_t i = 1; i < time.size(); ++i)
    if (!(time[i] > time[i - 1]))
      throw Error(ErrorKind::InvalidConfig,
                  "sample times must be strictly increasing (row " + std::to_string(i) + ")");
  if (!q.allFinite()) throw Error(ErrorKind::NonFiniteData, "posture data contains NaN or inf");
}

PcaResult fit_pca(const PostureSeries& data) {
  const std::size_t m = data.joints();
  if (data.samples() < m + 1)
    throw Error(ErrorKind::TooFewSamples, "need at least " + std::to_string(m + 1) + " samples, got " +
                                              std::to_string(data.samples()));
  data.validate();

  PcaResult out;
  out.mean = data.q.colwise().mean().transpose();
  const Matrix centered = data.q.rowwise() - out.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(data.samples() - 1);

  const SymmetricEigen eig = jacobi_eigen(cov);
  out.eigenvalues = eig.values.cwiseMax(0.0);
  out.components = eig.vectors.transpose();
  for (Eigen::Index k = 0; k < out.components.rows(); ++k) {
    Eigen::Index arg = 0;
    out.components.row(k).cwiseAbs().maxCoeff(&arg);
    if (out.components(k, arg) < 0.0) out.components.row(k) *= -1.0;
    out.components.row(k).normalize();
  }
  return out;
}

MappingMatrix build_mapping(const PcaResult& pca, std::size_t n) {
  if (pca.count() < n)
    throw Error(ErrorKind::DegeneratePca, "PCA has fewer than " + std::to_string(n) + " components");
  for (std::size_t k = 0; k < n; ++k)
    if (pca.eigenvalues(static_cast<Eigen::Index>(k)) <= 1e-12)
      throw Error(ErrorKind::DegeneratePca,
                  "eigenvalue " + std::to_string(k + 1) + " is not positive; cannot scale mapping");
  MappingMatrix out{Matrix(n, pca.joints())};
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.c.row(i) = std::sqrt(pca.eigenvalues(i)) * pca.components.row(i);
  }
  return out;
}

SynergyBasis extract_synergies(const PcaResult& pca, std::size_t h) {
  if (h < 1 || h > pca.count())
    throw Error(ErrorKind::HOutOfRange, "h = " + std::to_string(h) + " outside [1, " +
                                            std::to_string(pca.count()) + "]");
  return SynergyBasis{pca.components.topRows(static_cast<Eigen::Index>(h))};
}

WeightDecomposition decompose_weights(const MappingMatrix& c, const SynergyBasis& phi) {
  if (c.m() != phi.m())
    throw Error(ErrorKind::DimensionMismatch, "C has " + std::to_string(c.m()) + " columns, Phi has " +
                                                  std::to_string(phi.m()));
  WeightDecomposition out;
  out.w = c.c * phi.phi.transpose();
  const double c_norm = spectral_norm(c.c);
  out.residual = c_norm > 0.0 ? spectral_norm(c.c - out.w * phi.phi) / c_norm : 0.0;
  return out;
}

PostureSeries synthesize_postures(const PostureSynthesis& spec, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(spec.joints);
  const auto k = static_cast<Eigen::Index>(spec.generator_variances.size());
  if (k > m) throw Error(ErrorKind::InvalidConfig, "more synergy generators than joints");
  Rng rng(seed);

  // Random orthonormal generators from a QR factorization.
  Matrix g(m, m);
  rng.fill_normal(g);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix basis = qr.householderQ() * Matrix::Identity(m, k);

  Vector mean(m);
  for (Eigen::Index j = 0; j < m; ++j) mean(j) = 0.3 + 0.5 * rng.uniform();

  const double rho = spec.smoothing;
  const double innovation = std::sqrt(1.0 - rho * rho);
  Vector activation(k);
  rng.fill_normal(activation);

  PostureSeries out;
  out.time.resize(spec.samples);
  out.q.resize(static_cast<Eigen::Index>(spec.samples), m);
  Vector noise(m);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    out.time[i] = static_cast<double>(i) / spec.sample_rate_hz;
    for (Eigen::Index j = 0; j < k; ++j) activation(j) = rho * activation(j) + innovation * rng.normal();
    rng.fill_normal(noise);
    Vector q = mean + std::sqrt(spec.joint_noise_variance) * noise;
    for (Eigen::Index j = 0; j < k; ++j)
      q += std::sqrt(spec.generator_variances[static_cast<std::size_t>(j)]) * activation(j) * basis.col(j);
    out.q.row(static_cast<Eigen::Index>(i)) = q.transpose();
  }
  return out;
}

}  // namespace hml
