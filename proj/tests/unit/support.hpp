#pragma once

#include "hml/model.hpp"
#include "hml/rng.hpp"
#include "hml/synergy.hpp"

#include "doctest.h"

#include <cmath>

namespace hml::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix a(rows, cols);
  rng.fill_normal(a);
  return a;
}

inline Vector random_vector(Rng& rng, Eigen::Index n) {
  Vector v(n);
  rng.fill_normal(v);
  return v;
}

// Random matrix with orthonormal rows.
inline Matrix orthonormal_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix a = random_matrix(rng, cols, rows);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(cols, rows);
  return q.transpose();
}

// Calibrated environment from the default synthetic recording.
inline const PcaResult& synthetic_pca() {
  static const PcaResult pca = fit_pca(synthesize_postures(PostureSynthesis{}, 7));
  return pca;
}

inline Environment synthetic_env(std::size_t h = kDefaultSynergies) {
  const PcaResult& pca = synthetic_pca();
  return Environment::make(build_mapping(pca), extract_synergies(pca, h));
}

inline ModelState random_state(const Environment& env, Rng& rng) {
  ModelState s;
  s.delta_q = random_vector(rng, static_cast<Eigen::Index>(env.m()));
  s.u = random_vector(rng, static_cast<Eigen::Index>(env.m()));
  s.e_x = random_vector(rng, static_cast<Eigen::Index>(env.n()));
  s.x = random_vector(rng, static_cast<Eigen::Index>(env.n()));
  s.w_hat = random_matrix(rng, static_cast<Eigen::Index>(env.n()), static_cast<Eigen::Index>(env.h()));
  return s;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace hml::test
