#pragma once

/// \file
/// One spatial Fourier mode of the linearized two-species VMB system
///
///   d/dt u + i xi.k u - E.xi M^{1/2} q1 = L u + g
///   d/dt E - i k x B = -G,   G = <xi M^{1/2}, u_+ - u_->
///   d/dt B + i k x E = 0
///   i k.E = a_+ - a_-,   k.B = 0
///
/// State vectors are stacked as (u_+ coeffs, u_- coeffs, E, B), length 2*dim+6.

#include "vmb/collision.hpp"
#include "vmb/velocity_basis.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmb {

using cplx = std::complex<double>;
using VecXc = Eigen::VectorXcd;
using MatXc = Eigen::MatrixXcd;
using Vec3c = Eigen::Vector3cd;

inline constexpr cplx I_UNIT{0.0, 1.0};

inline Eigen::Matrix3d cross_matrix(const Vec3& k) {
  Eigen::Matrix3d m;
  m << 0, -k(2), k(1), k(2), 0, -k(0), -k(1), k(0), 0;
  return m;
}

/// Conjugate-linear in the second slot: (x | y) = sum x_j conj(y_j).
template <class A, class B>
cplx cdot(const A& x, const B& y) {
  return (x.array() * y.conjugate().array()).sum();
}

struct ModeLayout {
  int dim = 0;
  int size() const { return 2 * dim + 6; }
  int plus() const { return 0; }
  int minus() const { return dim; }
  int e() const { return 2 * dim; }
  int b() const { return 2 * dim + 3; }
};

struct ModeState {
  Vec3 k = Vec3::Zero();
  VecXc y;
  double t = 0.0;

  int dim() const { return static_cast<int>((y.size() - 6) / 2); }
  ModeLayout layout() const { return {dim()}; }
  TwoSpeciesVector<cplx> u() const { return {y.head(dim()), y.segment(dim(), dim())}; }
  VecXc u_stacked() const { return y.head(2 * dim()); }
  Vec3c e() const { return y.segment<3>(2 * dim()); }
  Vec3c b() const { return y.segment<3>(2 * dim() + 3); }
  void set_u(const TwoSpeciesVector<cplx>& u) {
    y.head(dim()) = u.plus;
    y.segment(dim(), dim()) = u.minus;
  }
  void set_e(const Vec3c& e) { y.segment<3>(2 * dim()) = e; }
  void set_b(const Vec3c& b) { y.segment<3>(2 * dim() + 3) = b; }

  static ModeState zero(const Vec3& k, int dim) { return {k, VecXc::Zero(2 * dim + 6), 0.0}; }
  /// ||u||^2 + |E|^2 + |B|^2.
  double base_energy() const { return y.squaredNorm(); }
};

struct GeneratorOptions {
  bool collision = true;
  bool field_coupling = true;
};

struct ModeGenerator {
  Vec3 k = Vec3::Zero();
  MatXc matrix;
  int dim = 0;
};

inline ModeGenerator assemble_generator(const Vec3& k, const VelocityBasis& basis, const CollisionOperator& op,
                                        const GeneratorOptions& opt = {}) {
  const int d = basis.dim();
  const ModeLayout lay{d};
  ModeGenerator g;
  g.k = k;
  g.dim = d;
  g.matrix = MatXc::Zero(lay.size(), lay.size());

  Eigen::MatrixXd transport = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < 3; ++j) transport += k(j) * basis.position_matrix(j);
  g.matrix.block(lay.plus(), lay.plus(), d, d) = -I_UNIT * transport.cast<cplx>();
  g.matrix.block(lay.minus(), lay.minus(), d, d) = -I_UNIT * transport.cast<cplx>();
  if (opt.collision) g.matrix.topLeftCorner(2 * d, 2 * d) += op.l_matrix.cast<cplx>();

  if (opt.field_coupling) {
    for (int j = 0; j < 3; ++j) {
      const int ej = basis.unit_index(j);
      g.matrix(lay.plus() + ej, lay.e() + j) += 1.0;
      g.matrix(lay.minus() + ej, lay.e() + j) -= 1.0;
      g.matrix(lay.e() + j, lay.plus() + ej) -= 1.0;
      g.matrix(lay.e() + j, lay.minus() + ej) += 1.0;
    }
  }
  const Eigen::Matrix3cd kx = I_UNIT * cross_matrix(k).cast<cplx>();
  g.matrix.block<3, 3>(lay.e(), lay.b()) += kx;
  g.matrix.block<3, 3>(lay.b(), lay.e()) -= kx;
  return g;
}

// -- constraints ----------------------------------------------------------------

struct ConstraintResiduals {
  double r1 = 0.0;  ///< |i k.E - (a_+ - a_-)|
  double r2 = 0.0;  ///< |k.B|
};

inline ConstraintResiduals constraint_residuals(const ModeState& s) {
  const int d = s.dim();
  const cplx charge = s.y(0) - s.y(d);
  const Vec3c kc = s.k.cast<cplx>();
  return {std::abs(I_UNIT * (kc.transpose() * s.e())(0) - charge), std::abs((kc.transpose() * s.b())(0))};
}

/// Sets the longitudinal part of E from a_+ - a_- and removes the k-component
/// of B. At k = 0 the charge is neutralized instead (a_+ = a_- = mean).
inline void impose_constraints(ModeState& s) {
  const int d = s.dim();
  const double k2 = s.k.squaredNorm();
  if (k2 == 0.0) {
    const cplx mean = 0.5 * (s.y(0) + s.y(d));
    s.y(0) = mean;
    s.y(d) = mean;
    return;
  }
  const Vec3c khat = (s.k / std::sqrt(k2)).cast<cplx>();
  const cplx charge = s.y(0) - s.y(d);
  Vec3c e = s.e();
  e -= khat * (khat.transpose() * e)(0);
  e += -I_UNIT * charge * s.k.cast<cplx>() / k2;
  s.set_e(e);
  Vec3c b = s.b();
  b -= khat * (khat.transpose() * b)(0);
  s.set_b(b);
}

/// Complex Gaussian coefficients, constraint-consistent, unit base energy.
template <class Rng>
ModeState random_mode_state(const Vec3& k, int dim, Rng& rng) {
  std::normal_distribution<double> n01;
  ModeState s = ModeState::zero(k, dim);
  for (Eigen::Index i = 0; i < s.y.size(); ++i) s.y(i) = cplx(n01(rng), n01(rng));
  impose_constraints(s);
  s.y /= s.y.norm();
  return s;
}

/// Complex basis (columns) of the constraint-consistent subspace at k.
inline MatXc constraint_subspace(const Vec3& k, int dim) {
  const ModeLayout lay{dim};
  const int n = lay.size();
  MatXc c = MatXc::Zero(2, n);
  for (int j = 0; j < 3; ++j) {
    c(0, lay.e() + j) = I_UNIT * k(j);
    c(1, lay.b() + j) = k(j);
  }
  c(0, 0) = -1.0;
  c(0, dim) = 1.0;
  if (k.squaredNorm() == 0.0) c.row(1).setZero();
  Eigen::JacobiSVD<MatXc> svd(c, Eigen::ComputeFullV);
  const int rank = static_cast<int>((svd.singularValues().array() > 1e-12).count());
  return svd.matrixV().rightCols(n - rank);
}

// -- sources ------------------------------------------------------------------------

/// Microscopic source g(t) in stacked two-species coordinates. A source must
/// satisfy P g = 0; validate() checks this on sampled times.
struct MicroSource {
  std::function<VecXc(double)> g;
  /// g vanishes for t >= support_end (infinity when persistent).
  double support_end = std::numeric_limits<double>::infinity();

  VecXc operator()(double t) const { return t >= support_end ? VecXc::Zero(g(0.0).size()) : g(t); }

  /// Largest |P g(t)| over the sample times.
  double macro_leak(const VelocityBasis& basis, const std::vector<double>& times) const {
    double worst = 0.0;
    for (double t : times) {
      const auto gs = TwoSpeciesVector<cplx>::from_stacked(g(t));
      const auto pu = basis.macro_vector(basis.macro_coefficients(gs));
      worst = std::max(worst, std::sqrt(pu.plus.squaredNorm() + pu.minus.squaredNorm()));
    }
    return worst;
  }
};

class InvalidSourceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// g(t) = amplitude(t) * profile with a fixed velocity profile.
inline MicroSource separable_source(VecXc profile, std::function<double(double)> amplitude,
                                    double support_end = std::numeric_limits<double>::infinity()) {
  MicroSource s;
  s.g = [p = std::move(profile), a = std::move(amplitude)](double t) -> VecXc { return a(t) * p; };
  s.support_end = support_end;
  return s;
}

inline void require_microscopic(const MicroSource& src, const VelocityBasis& basis, double t_end,
                                double tol = 1e-10) {
  std::vector<double> times;
  const double hi = std::isfinite(src.support_end) ? std::min(src.support_end, t_end) : t_end;
  for (int i = 0; i <= 16; ++i) times.push_back(hi * i / 16.0);
  const double leak = src.macro_leak(basis, times);
  if (leak > tol) throw InvalidSourceError("source has a macroscopic component (|P g| = " + std::to_string(leak) + ")");
}

// -- time integration -------------------------------------------------------------------

enum class Integrator { exponential, split };

struct EvolveOptions {
  Integrator integrator = Integrator::exponential;
  double split_tolerance = 1e-10;   ///< step-doubling local error tolerance (split scheme)
  double stiffness_limit = 0.5;     ///< dt * max(nu, |k| max|xi|) bound for the split scheme
  double constraint_threshold = 1e-8;
  int source_nodes = 8;             ///< Gauss-Legendre points per step for the Duhamel term
};

struct Trajectory {
  std::vector<ModeState> samples;
  double dt = 0.0;
  std::vector<std::string> warnings;
  int rejected_steps = 0;

  std::size_t size() const { return samples.size(); }
};

class StepSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact propagator over one step of length h, with the Duhamel integral of a
/// source evaluated by Gauss-Legendre quadrature in the step.
class ExponentialStepper {
 public:
  ExponentialStepper(const ModeGenerator& gen, double h, int source_nodes = 8) : h_(h), dim_(gen.dim) {
    step_ = (h * gen.matrix).exp();
    const Rule1D gl = gauss_legendre(source_nodes);
    for (std::size_t q = 0; q < gl.size(); ++q) {
      const double tau = 0.5 * h * (gl.nodes[q] + 1.0);
      offsets_.push_back(tau);
      weights_.push_back(0.5 * h * gl.weights[q]);
      // Only the kinetic columns are ever hit by a source.
      tails_.push_back(((h - tau) * gen.matrix).exp().leftCols(2 * gen.dim));
    }
  }

  double h() const { return h_; }
  const MatXc& matrix() const { return step_; }

  VecXc advance(const VecXc& y, double t, const MicroSource* src) const {
    VecXc out = step_ * y;
    if (src) {
      if (t >= src->support_end) return out;
      for (std::size_t q = 0; q < offsets_.size(); ++q) out += weights_[q] * (tails_[q] * (*src)(t + offsets_[q]));
    }
    return out;
  }

 private:
  double h_;
  int dim_;
  MatXc step_;
  std::vector<double> offsets_;
  std::vector<double> weights_;
  std::vector<MatXc> tails_;
};

/// Strang splitting: exact exponential of the collision-frequency part -2 nu,
/// classical RK4 for transport, K and field coupling, with step-doubling
/// error control. Second order.
class SplitStepper {
 public:
  SplitStepper(const ModeGenerator& gen, const CollisionOperator& op) : gen_(gen.matrix), dim_(gen.dim) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.nu_matrix);
    nu_vectors_ = es.eigenvectors();
    nu_values_ = 2.0 * es.eigenvalues();
    MatXc stiff = MatXc::Zero(gen.matrix.rows(), gen.matrix.cols());
    const Eigen::MatrixXd loss = -2.0 * op.nu_matrix;
    stiff.block(0, 0, dim_, dim_) = loss.cast<cplx>();
    stiff.block(dim_, dim_, dim_, dim_) = loss.cast<cplx>();
    rest_ = gen_ - stiff;
  }

  VecXc step(const VecXc& y, double t, double h, const MicroSource* src) const {
    VecXc z = half_loss(y, h);
    auto f = [&](double s, const VecXc& v) {
      VecXc r = rest_ * v;
      if (src) r.head(2 * dim_) += (*src)(s);
      return r;
    };
    const VecXc k1 = f(t, z);
    const VecXc k2 = f(t + 0.5 * h, z + 0.5 * h * k1);
    const VecXc k3 = f(t + 0.5 * h, z + 0.5 * h * k2);
    const VecXc k4 = f(t + h, z + h * k3);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return half_loss(z, h);
  }

 private:
  VecXc half_loss(const VecXc& y, double h) const {
    VecXc out = y;
    const Eigen::ArrayXd decay = (-0.5 * h * nu_values_).array().exp();
    for (int s = 0; s < 2; ++s) {
      const VecXc seg = y.segment(s * dim_, dim_);
      const VecXc modal = nu_vectors_.transpose().cast<cplx>() * seg;
      out.segment(s * dim_, dim_) = nu_vectors_.cast<cplx>() * (decay.cast<cplx>() * modal.array()).matrix();
    }
    return out;
  }

  MatXc gen_;
  MatXc rest_;
  int dim_;
  Eigen::MatrixXd nu_vectors_;
  Eigen::VectorXd nu_values_;
};

/// Largest stiffness scale max(2 nu at the velocity nodes, |k| max|xi node|).
inline double stiffness_scale(const Vec3& k, const VelocityBasis& basis) {
  double nu_max = 0.0, xi_max = 0.0;
  for (const auto& x : basis.quad_nodes()) {
    nu_max = std::max(nu_max, 2.0 * collision_frequency(x));
    xi_max = std::max(xi_max, x.norm());
  }
  return std::max(nu_max, k.norm() * xi_max);
}

/// Evolves from `state` and records samples every dt up to t_end (inclusive).
inline Trajectory evolve(const ModeState& state, const ModeGenerator& gen, const MicroSource* source, double dt,
                         double t_end, const EvolveOptions& opt = {}, const VelocityBasis* basis = nullptr,
                         const CollisionOperator* op = nullptr) {
  if (!(dt > 0.0)) throw StepSizeError("evolve: dt must be positive");
  if (basis && source) require_microscopic(*source, *basis, t_end);
  Trajectory traj;
  traj.dt = dt;
  const auto steps = static_cast<long>(std::llround(t_end / dt));
  traj.samples.reserve(static_cast<std::size_t>(steps) + 1);
  traj.samples.push_back(state);

  double worst_constraint = 0.0;
  auto monitor = [&](const ModeState& s) {
    const auto r = constraint_residuals(s);
    const double scale = std::max(s.y.norm(), 1e-300);
    worst_constraint = std::max(worst_constraint, std::max(r.r1, r.r2) / scale);
  };

  if (opt.integrator == Integrator::exponential) {
    const ExponentialStepper stepper(gen, dt, opt.source_nodes);
    ModeState cur = state;
    for (long n = 0; n < steps; ++n) {
      cur.y = stepper.advance(cur.y, cur.t, source);
      cur.t = state.t + (n + 1) * dt;
      if (source == nullptr) monitor(cur);
      traj.samples.push_back(cur);
    }
  } else {
    if (!op || !basis) throw std::invalid_argument("evolve: split integrator needs the basis and collision operator");
    const double stiff = stiffness_scale(gen.k, *basis);
    if (dt * stiff > opt.stiffness_limit)
      throw StepSizeError("evolve: dt does not resolve the stiffest scale (dt * " + std::to_string(stiff) + " > " +
                          std::to_string(opt.stiffness_limit) + ")");
    const SplitStepper stepper(gen, *op);
    ModeState cur = state;
    double h = dt;
    for (long n = 0; n < steps; ++n) {
      const double target = state.t + (n + 1) * dt;
      while (cur.t < target - 1e-14 * std::max(1.0, target)) {
        h = std::min(h, target - cur.t);
        const VecXc full = stepper.step(cur.y, cur.t, h, source);
        const VecXc half = stepper.step(stepper.step(cur.y, cur.t, 0.5 * h, source), cur.t + 0.5 * h, 0.5 * h, source);
        const double err = (full - half).norm() / std::max(half.norm(), 1e-300);
        if (err > opt.split_tolerance) {
          ++traj.rejected_steps;
          h *= 0.5;
          if (h < 1e-12 * dt) throw StepSizeError("evolve: step size underflow");
          continue;
        }
        cur.y = (4.0 * half - full) / 3.0;
        cur.t += h;
        if (err < 0.1 * opt.split_tolerance) h *= 1.5;
      }
      cur.t = target;
      if (source == nullptr) monitor(cur);
      traj.samples.push_back(cur);
    }
  }
  if (source == nullptr && worst_constraint > opt.constraint_threshold)
    traj.warnings.push_back("constraint residual drifted to " + std::to_string(worst_constraint) +
                            " relative to the state norm");
  return traj;
}

// -- diagnostics ----------------------------------------------------------------------

/// d/dt of uniformly sampled values: centered differences inside, one-sided
/// second-order differences at the ends.
template <class T>
std::vector<T> time_derivative(const std::vector<T>& v, double dt) {
  const std::size_t n = v.size();
  std::vector<T> d(n);
  if (n < 3) throw std::invalid_argument("time_derivative: need at least 3 samples");
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
  d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt);
  d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dt);
  return d;
}

/// 2 Re <L u, u> (+ 2 Re <g, u> with a source).
inline double energy_production(const ModeState& s, const CollisionOperator& op, const VecXc* g = nullptr) {
  const VecXc u = s.u_stacked();
  double r = 2.0 * std::real(cdot(op.l_matrix.cast<cplx>() * u, u));
  if (g) r += 2.0 * std::real(cdot(*g, u));
  return r;
}

struct EnergyIdentityCheck {
  std::vector<double> fd_rate;
  std::vector<double> production;
  double max_relative_error = 0.0;
};

/// Compares the finite-difference derivative of the base energy with
/// 2 Re <L u, u> at interior samples.
inline EnergyIdentityCheck energy_identity(const Trajectory& traj, const CollisionOperator& op,
                                           const MicroSource* src = nullptr) {
  EnergyIdentityCheck c;
  std::vector<double> e;
  for (const auto& s : traj.samples) e.push_back(s.base_energy());
  c.fd_rate = time_derivative(e, traj.dt);
  double scale = 0.0;
  for (const auto& s : traj.samples) {
    VecXc g;
    if (src) g = (*src)(s.t);
    c.production.push_back(energy_production(s, op, src ? &g : nullptr));
    scale = std::max(scale, std::abs(c.production.back()));
  }
  for (std::size_t i = 1; i + 1 < e.size(); ++i)
    c.max_relative_error = std::max(c.max_relative_error, std::abs(c.fd_rate[i] - c.production[i]) / std::max(scale, 1e-300));
  return c;
}

struct MomentResiduals {
  std::vector<double> times;
  // One series per balance law; each entry is the max |LHS - RHS| over species and components.
  std::vector<double> m0, m1, m2, m2ii, m2ij, m3, m0_diff, m1_diff;

  double max_all() const {
    double m = 0.0;
    for (const auto* s : {&m0, &m1, &m2, &m2ii, &m2ij, &m3, &m0_diff, &m1_diff})
      for (double v : *s) m = std::max(m, v);
    return m;
  }
  std::vector<std::pair<std::string, double>> maxima() const {
    auto mx = [](const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); };
    return {{"m0", mx(m0)},     {"m1", mx(m1)}, {"m2", mx(m2)},           {"m2ii", mx(m2ii)},
            {"m2ij", mx(m2ij)}, {"m3", mx(m3)}, {"m0_diff", mx(m0_diff)}, {"m1_diff", mx(m1_diff)}};
  }
};

/// Fourier-form residuals of the macroscopic balance laws and the high-order
/// moment equations along a trajectory, with d/dt by finite differences and
/// the collision terms through the assembled L. Endpoints are skipped.
inline MomentResiduals moment_residuals(const Trajectory& traj, const VelocityBasis& basis, const CollisionOperator& op,
                                        const MicroSource* src = nullptr) {
  MomentResiduals res;
  const std::size_t n = traj.size();
  if (n < 3) return res;
  const int d = basis.dim();
  const Vec3 k = traj.samples.front().k;
  const Vec3c ik = I_UNIT * k.cast<cplx>();
  const MatXc lc = op.l_matrix.cast<cplx>();
  MatXc transport = MatXc::Zero(d, d);
  for (int j = 0; j < 3; ++j) transport += k(j) * basis.position_matrix(j).cast<cplx>();

  auto row = [](const Eigen::RowVectorXd& r, const VecXc& w) { return (r.cast<cplx>() * w)(0); };

  // Quantities under d/dt, per sample.
  struct Snapshot {
    std::array<cplx, 2> a;
    std::array<Vec3c, 2> bulk_plus_flux;  // b_i + <xi_i, w_s>
    std::array<cplx, 2> energy;           // c + <|xi|^2-3, w_s>/6
    std::array<Eigen::Matrix3cd, 2> theta_ii_plus;  // Theta(w_s) + 2c on the diagonal
    std::array<Vec3c, 2> lambda;
    cplx charge;
    Vec3c g_flux;
  };
  std::vector<Snapshot> snaps;
  snaps.reserve(n);
  std::vector<MacroProjection<cplx>> proj;
  for (const auto& s : traj.samples) {
    const auto u = s.u();
    proj.push_back(basis.project_P(u));
    const auto& p = proj.back();
    Snapshot sn;
    const VecXc* ws[2] = {&p.micro.plus, &p.micro.minus};
    const VecXc* us[2] = {&u.plus, &u.minus};
    for (int sp = 0; sp < 2; ++sp) {
      sn.a[sp] = row(basis.one_row(), *us[sp]);
      for (int i = 0; i < 3; ++i) sn.bulk_plus_flux[sp](i) = p.macro.b(i) + row(basis.xi_row(i), *ws[sp]);
      sn.energy[sp] = p.macro.c + row(basis.energy_row(), *ws[sp]) / 6.0;
      sn.theta_ii_plus[sp] = basis.theta_moment(*ws[sp]);
      for (int i = 0; i < 3; ++i) sn.theta_ii_plus[sp](i, i) += 2.0 * p.macro.c;
      sn.lambda[sp] = basis.lambda_moment(*ws[sp]);
    }
    sn.charge = sn.a[0] - sn.a[1];
    for (int j = 0; j < 3; ++j) sn.g_flux(j) = row(basis.xi_row(j), u.plus - u.minus);
    snaps.push_back(sn);
  }

  const double h = traj.dt;
  for (std::size_t t = 1; t + 1 < n; ++t) {
    const auto& s = traj.samples[t];
    const auto& p = proj[t];
    const auto& nx = snaps[t + 1];
    const auto& pv = snaps[t - 1];
    const auto ddt = [h](const auto& fwd, const auto& back) { return (fwd - back) / (2.0 * h); };

    const VecXc lu = lc * s.u_stacked();
    VecXc g = VecXc::Zero(2 * d);
    if (src) g = (*src)(s.t);
    const VecXc* ws[2] = {&p.micro.plus, &p.micro.minus};
    const double sign[2] = {1.0, -1.0};
    const Vec3c e = s.e();
    const Vec3c& b = p.macro.b;
    const cplx c = p.macro.c;

    double m0 = 0, m1 = 0, m2 = 0, m2ii = 0, m2ij = 0, m3 = 0;
    for (int sp = 0; sp < 2; ++sp) {
      const VecXc& w = *ws[sp];
      const VecXc ls = lu.segment(sp * d, d);
      const VecXc gs = g.segment(sp * d, d);
      const VecXc l_and_g = -I_UNIT * (transport * w) + ls + gs;  // l_s + g_s
      const cplx mass_g = row(basis.one_row(), gs);
      cplx flux_div = 0.0;
      for (int j = 0; j < 3; ++j) flux_div += ik(j) * row(basis.xi_row(j), w);

      m0 = std::max(m0, std::abs(ddt(nx.a[sp], pv.a[sp]) + (ik.transpose() * b)(0) + flux_div - mass_g));

      for (int i = 0; i < 3; ++i) {
        cplx stress = 0.0;
        for (int j = 0; j < 3; ++j) stress += ik(j) * row(basis.second_moment_row(j, i), w);
        const cplx lhs = ddt(nx.bulk_plus_flux[sp](i), pv.bulk_plus_flux[sp](i)) +
                         ik(i) * (snaps[t].a[sp] + 2.0 * c) - sign[sp] * e(i) + stress;
        m1 = std::max(m1, std::abs(lhs - row(basis.xi_row(i), gs + ls)));
      }

      {
        cplx heat = 0.0;
        for (int j = 0; j < 3; ++j) heat += ik(j) * row(basis.heat_flux_row(j), w);
        const cplx lhs = ddt(nx.energy[sp], pv.energy[sp]) + (ik.transpose() * b)(0) / 3.0 + heat / 6.0;
        m2 = std::max(m2, std::abs(lhs - row(basis.energy_row(), gs + ls) / 6.0));
      }

      const Eigen::Matrix3cd theta_src = basis.theta_moment(l_and_g);
      const Eigen::Matrix3cd dtheta = ddt(nx.theta_ii_plus[sp], pv.theta_ii_plus[sp]);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          if (i == j) {
            m2ii = std::max(m2ii, std::abs(dtheta(i, i) + 2.0 * ik(i) * b(i) - theta_src(i, i)));
          } else {
            const cplx lhs = dtheta(i, j) + ik(j) * b(i) + ik(i) * b(j) + flux_div;
            m2ij = std::max(m2ij, std::abs(lhs - theta_src(i, j) - mass_g));
          }
        }

      const Vec3c lam_src = basis.lambda_moment(l_and_g);
      const Vec3c dlam = ddt(nx.lambda[sp], pv.lambda[sp]);
      for (int i = 0; i < 3; ++i) m3 = std::max(m3, std::abs(dlam(i) + ik(i) * c - lam_src(i)));
    }

    const Vec3c gflux = snaps[t].g_flux;
    const double m0d = std::abs(ddt(nx.charge, pv.charge) + (ik.transpose() * gflux)(0));
    const VecXc wdiff = p.micro.plus - p.micro.minus;
    const Eigen::Matrix3cd theta_diff = basis.theta_moment(wdiff);
    const VecXc rhs_diff = (g.head(d) + lu.head(d)) - (g.segment(d, d) + lu.segment(d, d));
    double m1d = 0.0;
    for (int j = 0; j < 3; ++j) {
      cplx div_theta = 0.0;
      for (int i = 0; i < 3; ++i) div_theta += ik(i) * theta_diff(i, j);
      const cplx lhs = ddt(nx.g_flux(j), pv.g_flux(j)) + ik(j) * snaps[t].charge - 2.0 * e(j) + div_theta;
      m1d = std::max(m1d, std::abs(lhs - row(basis.xi_row(j), rhs_diff)));
    }

    res.times.push_back(s.t);
    res.m0.push_back(m0);
    res.m1.push_back(m1);
    res.m2.push_back(m2);
    res.m2ii.push_back(m2ii);
    res.m2ij.push_back(m2ij);
    res.m3.push_back(m3);
    res.m0_diff.push_back(m0d);
    res.m1_diff.push_back(m1d);
  }
  return res;
}

// -- CSV export ------------------------------------------------------------------------

inline const char* trajectory_csv_header() {
  return "t,k1,k2,k3,base_energy,micro_norm,a_plus_re,a_plus_im,a_minus_re,a_minus_im,b1_re,b1_im,b2_re,b2_im,"
         "b3_re,b3_im,c_re,c_im,abs_E,abs_B,r1,r2";
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const VelocityBasis& basis) {
  os << trajectory_csv_header() << "\n";
  const auto old = os.precision(17);
  for (const auto& s : traj.samples) {
    const auto p = basis.project_P(s.u());
    const auto r = constraint_residuals(s);
    const double micro = std::sqrt(p.micro.plus.squaredNorm() + p.micro.minus.squaredNorm());
    os << s.t << "," << s.k(0) << "," << s.k(1) << "," << s.k(2) << "," << s.base_energy() << "," << micro;
    auto put = [&os](cplx z) { os << "," << z.real() << "," << z.imag(); };
    put(p.macro.a_plus);
    put(p.macro.a_minus);
    for (int i = 0; i < 3; ++i) put(p.macro.b(i));
    put(p.macro.c);
    os << "," << s.e().norm() << "," << s.b().norm() << "," << r.r1 << "," << r.r2 << "\n";
  }
  os.precision(old);
}

}  // namespace vmb
