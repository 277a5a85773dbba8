#pragma once

#include "hml/linalg.hpp"
#include "hml/rng.hpp"
#include "hml/synergy.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace hml {

struct ModelParams {
  double gamma = 0.0664;   // forward learning rate, 1/s
  double eta = 3.1742;     // inverse learning rate, 1/s
  double mu = 2.4581;      // optimality parameter
  double k_p = 1.3098;     // control parameter, 1/s
  double sigma_u = 0.8764; // exploration noise intensity
  double sigma_q = 0.1370; // perceptual noise intensity
  double a = 10.0;         // perceptual recency, 1/s
  double dt = 0.01;        // integration step, s
  double rho_x = 0.25;     // target radius, screen units
  double w0_scale = 0.1;   // std of the initial weight estimate entries

  void validate() const;

  // Named access used by sweeps and JSON (gamma, eta, mu, k_p, sigma_u, sigma_q, a, dt,
  // rho_x, w0_scale).
  static const std::array<std::string_view, 10>& names();
  double get(std::string_view name) const;
  void set(std::string_view name, double value);

  bool operator==(const ModelParams&) const = default;
};

// Fitted values for the six subjects of the reference study (subject in 1..6).
ModelParams subject_params(int subject);

// Ground truth of a simulated participant: the interface mapping C, the synergy basis
// and the weights W = C Phi^T (C = W Phi only when C lies in the synergy span).
struct Environment {
  Matrix c;
  Matrix phi;
  Matrix w_true;

  static Environment make(const MappingMatrix& c, const SynergyBasis& phi);

  std::size_t n() const { return static_cast<std::size_t>(c.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(c.cols()); }
  std::size_t h() const { return static_cast<std::size_t>(phi.rows()); }
};

struct ModelState {
  Vector delta_q;  // filtered joint increments (m)
  Matrix w_hat;    // synergy weight estimate (n x h)
  Vector e_x;      // reaching error (n)
  Vector u;        // joint velocity (m)
  Vector x;        // cursor position (n)

  bool finite() const;
  bool operator==(const ModelState& o) const;
};

// u = 0, delta_q = 0, x = start, e_x = 0, w_hat ~ N(0, w0_scale^2) entrywise.
ModelState initial_state(const Environment& env, const ModelParams& p, Rng& rng, const Vector& start);

// eps = C dq - W_hat Phi dq.
Vector estimation_error(const Environment& env, const ModelState& s);

// Explicit Euler on dW_hat/dt = gamma eps (Phi dq)^T; returns the new estimate.
Matrix forward_step(const ModelState& s, const Environment& env, const ModelParams& p);

// J = 1/2 |W_hat Phi u - k_p e_x|^2 + mu/2 |u|^2.
double inverse_cost(const Vector& e_x, const Vector& u, const Matrix& w_hat, const Matrix& phi,
                    const ModelParams& p);

// Deterministic drift of u: -eta ((Phi^T W^T W Phi + mu I) u - k_p Phi^T W^T e_x).
Vector inverse_drift(const ModelState& s, const Matrix& phi, const ModelParams& p);

Vector inverse_step(const ModelState& s, const Matrix& phi, const ModelParams& p, const Vector& noise_u);

Vector perception_step(const ModelState& s, const ModelParams& p, const Vector& noise_q);

// One Euler-Maruyama step of the coupled model. Every update reads the start-of-step
// state. Noise is drawn as m perceptual normals followed by m exploration normals.
// Throws NonFiniteStateError (session/trial -1) if the state leaves the finite range.
void hml_step(ModelState& s, const Environment& env, const ModelParams& p, Rng& rng);

// Allocation-free stepper used by the simulators; hml_step is a thin wrapper over it.
// Matches the composition of the individual update operations up to rounding.
class Stepper {
 public:
  Stepper(const Environment& env, const ModelParams& p);

  void set_params(const ModelParams& p);
  const ModelParams& params() const { return p_; }

  // Advances the state; returns false instead of throwing when it becomes non-finite.
  bool step(ModelState& s, Rng& rng);

 private:
  const Environment* env_;
  ModelParams p_;
  double sqrt_dt_;
  Vector noise_q_, noise_u_, phi_dq_, eps_, phi_u_, chat_u_, resid_, g_, grad_, cu_, new_dq_;
};

}  // namespace hml
