#include "hml/error.hpp"
#include "hml/synergy.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <numeric>

using namespace hml;
using namespace hml::test;

namespace {

PostureSeries series_from(const Matrix& q) {
  PostureSeries s;
  s.q = q;
  s.time.resize(static_cast<std::size_t>(q.rows()));
  for (std::size_t i = 0; i < s.time.size(); ++i) s.time[i] = 0.01 * static_cast<double>(i);
  return s;
}

PcaResult axis_pca(Eigen::Index m, const std::vector<double>& eig) {
  PcaResult p;
  p.mean = Vector::Zero(m);
  p.components = Matrix::Identity(m, m);
  p.eigenvalues = Vector::Zero(m);
  for (std::size_t i = 0; i < eig.size(); ++i) p.eigenvalues(static_cast<Eigen::Index>(i)) = eig[i];
  return p;
}

// Largest principal angle between the row spaces of a and b.
double principal_angle(const Matrix& a, const Matrix& b) {
  Eigen::HouseholderQR<Matrix> qa(a.transpose()), qb(b.transpose());
  const Matrix oa = qa.householderQ() * Matrix::Identity(a.cols(), a.rows());
  const Matrix ob = qb.householderQ() * Matrix::Identity(b.cols(), b.rows());
  Eigen::JacobiSVD<Matrix> svd(oa.transpose() * ob);
  const double s = std::min(1.0, svd.singularValues().minCoeff());
  return std::acos(s);
}

}  // namespace

TEST_CASE("rank-one data along e1") {
  Rng rng(1);
  Matrix q = Matrix::Constant(200, 6, 0.4);
  std::vector<double> col(200);
  for (Eigen::Index i = 0; i < 200; ++i) q(i, 0) = col[static_cast<std::size_t>(i)] = rng.normal();
  const double mean = std::accumulate(col.begin(), col.end(), 0.0) / 200.0;
  double var = 0.0;
  for (double v : col) var += (v - mean) * (v - mean);
  var /= 199.0;

  const PcaResult p = fit_pca(series_from(q));
  CHECK(std::abs(p.components(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.components(0, 0) > 0.0);
  CHECK(p.eigenvalues(0) == doctest::Approx(var).epsilon(1e-12));
  for (Eigen::Index k = 1; k < 6; ++k) CHECK(p.eigenvalues(k) == doctest::Approx(0.0));
}

TEST_CASE("known diagonal covariance is recovered") {
  Rng rng(2);
  const Vector sd = (Vector(5) << 2.0, 1.0, 0.5, 0.25, 0.1).finished();
  Matrix q(20000, 5);
  rng.fill_normal(q);
  q = q * sd.asDiagonal();
  const PcaResult p = fit_pca(series_from(q));
  for (Eigen::Index k = 0; k < 5; ++k) CHECK(rel_err(p.eigenvalues(k), sd(k) * sd(k)) < 0.05);
}

TEST_CASE("two planted synergies are recovered as a plane") {
  Rng rng(4);
  const Matrix gen = orthonormal_rows(rng, 2, 19);
  Matrix act(3000, 2);
  rng.fill_normal(act);
  act.col(0) *= 2.0;
  const Matrix q = act * gen;
  const PcaResult p = fit_pca(series_from(q));
  CHECK(principal_angle(p.components.topRows(2), gen) < 1e-6);
}

TEST_CASE("PCA output invariants and oracle") {
  const PostureSeries data = synthesize_postures(PostureSynthesis{}, 11);
  const PcaResult p = fit_pca(data);
  const Eigen::Index m = static_cast<Eigen::Index>(p.joints());
  CHECK((p.components * p.components.transpose() - Matrix::Identity(m, m)).norm() < 1e-10);
  for (Eigen::Index k = 0; k + 1 < m; ++k) CHECK(p.eigenvalues(k) >= p.eigenvalues(k + 1));
  CHECK(p.eigenvalues.minCoeff() >= 0.0);
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::Index arg = 0;
    p.components.row(k).cwiseAbs().maxCoeff(&arg);
    CHECK(p.components(k, arg) > 0.0);
  }
  // Oracle: Eigen's solver on the N-1 covariance.
  const Matrix centered = data.q.rowwise() - data.q.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.samples() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> ref(cov);
  const Vector ref_values = ref.eigenvalues().reverse();
  CHECK((p.eigenvalues - ref_values.cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double dot = std::abs(p.components.row(k).dot(ref.eigenvectors().col(m - 1 - k)));
    CHECK(dot == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("sample order does not change the mapping") {
  PostureSeries data = synthesize_postures(PostureSynthesis{}, 12);
  const MappingMatrix c = build_mapping(fit_pca(data));
  std::vector<Eigen::Index> order(data.samples());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(3);
  std::shuffle(order.begin(), order.end(), rng.engine());
  PostureSeries permuted = data;
  for (std::size_t i = 0; i < order.size(); ++i) permuted.q.row(static_cast<Eigen::Index>(i)) = data.q.row(order[i]);
  const MappingMatrix c2 = build_mapping(fit_pca(permuted));
  CHECK((c.c - c2.c).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("build_mapping scales components by sqrt(eigenvalue)") {
  const MappingMatrix c = build_mapping(axis_pca(4, {4.0, 1.0}));
  Matrix expected = Matrix::Zero(2, 4);
  expected(0, 0) = 2.0;
  expected(1, 1) = 1.0;
  CHECK((c.c - expected).norm() == 0.0);

  const MappingMatrix unit = build_mapping(axis_pca(4, {1.0, 1.0}));
  CHECK((unit.c - Matrix::Identity(2, 4)).norm() == 0.0);

  Rng rng(6);
  PcaResult r;
  r.components = orthonormal_rows(rng, 6, 6);
  r.eigenvalues = (Vector(6) << 3.3, 1.7, 0.5, 0.2, 0.1, 0.0).finished();
  r.mean = Vector::Zero(6);
  const MappingMatrix rc = build_mapping(r);
  CHECK(std::abs(rc.c.row(0).norm() - std::sqrt(3.3)) < 1e-12);
  CHECK(std::abs(rc.c.row(1).norm() - std::sqrt(1.7)) < 1e-12);

  CHECK_THROWS_AS(build_mapping(axis_pca(4, {1.0})), Error);
}

TEST_CASE("extract_synergies") {
  const PcaResult& pca = synthetic_pca();
  const SynergyBasis full = extract_synergies(pca, pca.joints());
  CHECK((full.phi * full.phi.transpose() - Matrix::Identity(19, 19)).norm() < 1e-10);
  CHECK((full.phi.transpose() * full.phi - Matrix::Identity(19, 19)).norm() < 1e-10);

  const SynergyBasis four = extract_synergies(pca);
  CHECK(four.h() == 4);
  CHECK(four.m() == 19);
  CHECK((four.phi * four.phi.transpose() - Matrix::Identity(4, 4)).norm() < 1e-10);

  CHECK_THROWS_AS(extract_synergies(pca, 0), Error);
  CHECK_THROWS_AS(extract_synergies(pca, 20), Error);
}

TEST_CASE("four planted generators carry over 80% of the variance") {
  const PostureSeries data = synthesize_postures(PostureSynthesis{}, 13);
  const PcaResult p = fit_pca(data);
  const SynergyBasis phi = extract_synergies(p, 4);
  const Matrix centered = data.q.rowwise() - data.q.colwise().mean();
  const double total = centered.squaredNorm();
  const double in_span = (centered * phi.phi.transpose()).squaredNorm();
  CHECK(in_span / total >= 0.8);
}

TEST_CASE("decompose_weights") {
  const PcaResult& pca = synthetic_pca();
  const SynergyBasis phi = extract_synergies(pca, 4);

  const WeightDecomposition inside = decompose_weights(MappingMatrix{phi.phi.topRows(2)}, phi);
  Matrix expected = Matrix::Zero(2, 4);
  expected(0, 0) = expected(1, 1) = 1.0;
  CHECK((inside.w - expected).norm() < 1e-12);
  CHECK(inside.residual < 1e-12);

  const SynergyBasis full = extract_synergies(pca, 19);
  const WeightDecomposition outside = decompose_weights(MappingMatrix{full.phi.middleRows(6, 2)}, phi);
  CHECK(outside.w.norm() < 1e-12);
  CHECK(outside.residual == doctest::Approx(1.0));

  Rng rng(9);
  const Matrix c = random_matrix(rng, 2, 19);
  CHECK(decompose_weights(MappingMatrix{c}, full).residual < 1e-10);

  CHECK_THROWS_AS(decompose_weights(MappingMatrix{Matrix::Zero(2, 5)}, phi), Error);
}

TEST_CASE("projection C Phi^T Phi is the best approximation in span(Phi)") {
  Rng rng(10);
  const SynergyBasis phi = extract_synergies(synthetic_pca(), 4);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix c = random_matrix(rng, 2, 19);
    const double best = (c - c * phi.phi.transpose() * phi.phi).norm();
    const Matrix m = random_matrix(rng, 2, 4);
    CHECK(best <= (c - m * phi.phi).norm() + 1e-12);
    const Matrix near = c * phi.phi.transpose() + 1e-3 * m;
    CHECK(best <= (c - near * phi.phi).norm() + 1e-12);
  }
}

TEST_CASE("calibration input validation") {
  Matrix q = Matrix::Zero(10, 19);
  CHECK_THROWS_AS(fit_pca(series_from(q)), Error);
  try {
    fit_pca(series_from(q));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewSamples);
  }
  Matrix ok(30, 3);
  Rng rng(1);
  rng.fill_normal(ok);
  ok(4, 1) = std::numeric_limits<double>::infinity();
  try {
    fit_pca(series_from(ok));
    FAIL("expected NonFiniteData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteData);
  }
  PostureSeries s = synthesize_postures(PostureSynthesis{}, 1);
  s.time[5] = s.time[4];
  CHECK_THROWS_AS(fit_pca(s), Error);
}
