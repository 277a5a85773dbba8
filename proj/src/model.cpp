#include "hml/model.hpp"

#include "hml/error.hpp"

#include <cmath>
#include <string>

namespace hml {

namespace {

void check_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw Error(ErrorKind::InvalidParams, std::string(name) + " must be positive and finite");
}

void check_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw Error(ErrorKind::InvalidParams, std::string(name) + " must be non-negative and finite");
}

}  // namespace

void ModelParams::validate() const {
  check_non_negative(gamma, "gamma");
  check_positive(eta, "eta");
  check_positive(mu, "mu");
  check_positive(k_p, "k_p");
  check_positive(a, "a");
  check_positive(dt, "dt");
  check_positive(rho_x, "rho_x");
  check_non_negative(sigma_u, "sigma_u");
  check_non_negative(sigma_q, "sigma_q");
  check_non_negative(w0_scale, "w0_scale");
}

const std::array<std::string_view, 10>& ModelParams::names() {
  static const std::array<std::string_view, 10> kNames{"gamma", "eta",     "mu", "k_p", "sigma_u",
                                                       "sigma_q", "a", "dt", "rho_x", "w0_scale"};
  return kNames;
}

double ModelParams::get(std::string_view name) const {
  if (name == "gamma") return gamma;
  if (name == "eta") return eta;
  if (name == "mu") return mu;
  if (name == "k_p") return k_p;
  if (name == "sigma_u") return sigma_u;
  if (name == "sigma_q") return sigma_q;
  if (name == "a") return a;
  if (name == "dt") return dt;
  if (name == "rho_x") return rho_x;
  if (name == "w0_scale") return w0_scale;
  throw Error(ErrorKind::UnknownParameter, std::string(name));
}

void ModelParams::set(std::string_view name, double value) {
  if (name == "gamma") gamma = value;
  else if (name == "eta") eta = value;
  else if (name == "mu") mu = value;
  else if (name == "k_p") k_p = value;
  else if (name == "sigma_u") sigma_u = value;
  else if (name == "sigma_q") sigma_q = value;
  else if (name == "a") a = value;
  else if (name == "dt") dt = value;
  else if (name == "rho_x") rho_x = value;
  else if (name == "w0_scale") w0_scale = value;
  else throw Error(ErrorKind::UnknownParameter, std::string(name));
}

ModelParams subject_params(int subject) {
  struct Row { double gamma, eta, mu, k_p, sigma_u, sigma_q; };
  static constexpr Row kTable[6] = {
      {0.0664, 3.1742, 2.4581, 1.3098, 0.8764, 0.1370},
      {0.0030, 3.1448, 3.3056, 1.5965, 1.0165, 0.5451},
      {0.0456, 1.5383, 3.3072, 3.2714, 1.0082, 0.0508},
      {0.1398, 1.9856, 3.5735, 1.8976, 0.9556, 0.0169},
      {0.0013, 2.4916, 3.5382, 1.5569, 1.9749, 0.7118},
      {0.1252, 0.7131, 3.9744, 2.2515, 0.9298, 0.0064},
  };
  if (subject < 1 || subject > 6)
    throw Error(ErrorKind::InvalidParams, "subject must be in 1..6, got " + std::to_string(subject));
  const Row& r = kTable[subject - 1];
  ModelParams p;
  p.gamma = r.gamma;
  p.eta = r.eta;
  p.mu = r.mu;
  p.k_p = r.k_p;
  p.sigma_u = r.sigma_u;
  p.sigma_q = r.sigma_q;
  p.a = 10.0;
  return p;
}

Environment Environment::make(const MappingMatrix& c, const SynergyBasis& phi) {
  Environment env;
  env.c = c.c;
  env.phi = phi.phi;
  env.w_true = decompose_weights(c, phi).w;
  return env;
}

bool ModelState::finite() const {
  return delta_q.allFinite() && w_hat.allFinite() && e_x.allFinite() && u.allFinite() && x.allFinite();
}

bool ModelState::operator==(const ModelState& o) const {
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(delta_q, o.delta_q) && same(w_hat, o.w_hat) && same(e_x, o.e_x) && same(u, o.u) &&
         same(x, o.x);
}

ModelState initial_state(const Environment& env, const ModelParams& p, Rng& rng, const Vector& start) {
  if (static_cast<std::size_t>(start.size()) != env.n())
    throw Error(ErrorKind::DimensionMismatch, "start position has wrong dimension");
  const auto m = static_cast<Eigen::Index>(env.m());
  const auto n = static_cast<Eigen::Index>(env.n());
  const auto h = static_cast<Eigen::Index>(env.h());
  ModelState s;
  s.delta_q = Vector::Zero(m);
  s.u = Vector::Zero(m);
  s.e_x = Vector::Zero(n);
  s.x = start;
  s.w_hat.resize(n, h);
  rng.fill_normal(s.w_hat);
  s.w_hat *= p.w0_scale;
  return s;
}

namespace {

void check_dims(const ModelState& s, const Environment& env) {
  if (static_cast<std::size_t>(s.delta_q.size()) != env.m() || static_cast<std::size_t>(s.u.size()) != env.m() ||
      static_cast<std::size_t>(s.e_x.size()) != env.n() || static_cast<std::size_t>(s.x.size()) != env.n() ||
      static_cast<std::size_t>(s.w_hat.rows()) != env.n() || static_cast<std::size_t>(s.w_hat.cols()) != env.h())
    throw Error(ErrorKind::DimensionMismatch, "model state does not match environment (m, n, h)");
}

}  // namespace

Vector estimation_error(const Environment& env, const ModelState& s) {
  check_dims(s, env);
  const Vector delta_x = env.c * s.delta_q;
  return delta_x - s.w_hat * (env.phi * s.delta_q);
}

Matrix forward_step(const ModelState& s, const Environment& env, const ModelParams& p) {
  const Vector eps = estimation_error(env, s);
  const Vector phi_dq = env.phi * s.delta_q;
  return s.w_hat + (p.dt * p.gamma) * eps * phi_dq.transpose();
}

double inverse_cost(const Vector& e_x, const Vector& u, const Matrix& w_hat, const Matrix& phi,
                    const ModelParams& p) {
  if (w_hat.cols() != phi.rows() || phi.cols() != u.size() || w_hat.rows() != e_x.size())
    throw Error(ErrorKind::DimensionMismatch, "inverse_cost operands disagree");
  const Vector r = w_hat * (phi * u) - p.k_p * e_x;
  return 0.5 * r.squaredNorm() + 0.5 * p.mu * u.squaredNorm();
}

Vector inverse_drift(const ModelState& s, const Matrix& phi, const ModelParams& p) {
  const Vector r = s.w_hat * (phi * s.u) - p.k_p * s.e_x;
  return -p.eta * (phi.transpose() * (s.w_hat.transpose() * r) + p.mu * s.u);
}

Vector inverse_step(const ModelState& s, const Matrix& phi, const ModelParams& p, const Vector& noise_u) {
  if (noise_u.size() != s.u.size()) throw Error(ErrorKind::DimensionMismatch, "noise_u length");
  return s.u + p.dt * inverse_drift(s, phi, p) + (std::sqrt(p.dt) * p.sigma_u) * noise_u;
}

Vector perception_step(const ModelState& s, const ModelParams& p, const Vector& noise_q) {
  if (noise_q.size() != s.delta_q.size()) throw Error(ErrorKind::DimensionMismatch, "noise_q length");
  return s.delta_q + p.dt * (-p.a * s.delta_q + s.u) + (std::sqrt(p.dt) * p.sigma_q) * noise_q;
}

void hml_step(ModelState& s, const Environment& env, const ModelParams& p, Rng& rng) {
  check_dims(s, env);
  Stepper stepper(env, p);
  if (!stepper.step(s, rng)) throw NonFiniteStateError(-1, -1, 0, "model state");
}

Stepper::Stepper(const Environment& env, const ModelParams& p) : env_(&env) {
  const auto m = static_cast<Eigen::Index>(env.m());
  const auto n = static_cast<Eigen::Index>(env.n());
  const auto h = static_cast<Eigen::Index>(env.h());
  noise_q_.resize(m);
  noise_u_.resize(m);
  phi_dq_.resize(h);
  eps_.resize(n);
  phi_u_.resize(h);
  chat_u_.resize(n);
  resid_.resize(n);
  g_.resize(h);
  grad_.resize(m);
  cu_.resize(n);
  new_dq_.resize(m);
  set_params(p);
}

void Stepper::set_params(const ModelParams& p) {
  p_ = p;
  sqrt_dt_ = std::sqrt(p.dt);
}

bool Stepper::step(ModelState& s, Rng& rng) {
  const Environment& env = *env_;
  const double dt = p_.dt;
  rng.fill_normal(noise_q_);
  rng.fill_normal(noise_u_);

  // Forward model: eps = C dq - W_hat Phi dq.
  phi_dq_.noalias() = env.phi * s.delta_q;
  eps_.noalias() = env.c * s.delta_q;
  eps_.noalias() -= s.w_hat * phi_dq_;

  // Inverse model gradient at the start-of-step W_hat.
  phi_u_.noalias() = env.phi * s.u;
  chat_u_.noalias() = s.w_hat * phi_u_;
  resid_ = chat_u_ - p_.k_p * s.e_x;
  g_.noalias() = s.w_hat.transpose() * resid_;
  grad_.noalias() = env.phi.transpose() * g_;
  grad_ += p_.mu * s.u;

  cu_.noalias() = env.c * s.u;

  s.w_hat.noalias() += (dt * p_.gamma) * eps_ * phi_dq_.transpose();
  new_dq_ = s.delta_q + dt * (s.u - p_.a * s.delta_q) + (sqrt_dt_ * p_.sigma_q) * noise_q_;
  s.delta_q.swap(new_dq_);
  s.u += (-dt * p_.eta) * grad_ + (sqrt_dt_ * p_.sigma_u) * noise_u_;
  s.x += dt * cu_;
  s.e_x -= dt * cu_;
  return s.finite();
}

}  // namespace hml
