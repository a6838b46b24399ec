#pragma once

/// \file
/// Frequency sweeps, whole-space L2 norms by radial quadrature, exponent
/// fitting and the inhomogeneous (Duhamel) variant.

#include "vmb/collision.hpp"
#include "vmb/fourier_mode.hpp"
#include "vmb/lyapunov.hpp"
#include "vmb/parallel.hpp"
#include "vmb/quadrature.hpp"
#include "vmb/velocity_basis.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmb {

// -- exponent fitting ------------------------------------------------------------------

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< RMS of log residuals
  double t1 = 0.0;
  double t2 = 0.0;
  int points = 0;
};

/// Least-squares slope of log(value) against log(1+t) for t in [t1, t2].
inline FitResult fit_exponent(const std::vector<double>& t, const std::vector<double>& v, double t1, double t2) {
  if (t.size() != v.size()) throw std::invalid_argument("fit_exponent: size mismatch");
  FitResult f;
  f.t1 = t1;
  f.t2 = t2;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t1 || t[i] > t2) continue;
    if (!(v[i] > 0.0)) throw std::invalid_argument("fit_exponent: non-positive value at t = " + std::to_string(t[i]));
    x.push_back(std::log1p(t[i]));
    y.push_back(std::log(v[i]));
  }
  f.points = static_cast<int>(x.size());
  if (f.points < 10) throw std::invalid_argument("fit_exponent: need at least 10 points in the window");
  const double n = f.points;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den <= 0.0) throw std::invalid_argument("fit_exponent: degenerate time window");
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

inline std::vector<double> log_spaced(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("log_spaced: need 0 < lo < hi and n >= 2");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, double(i) / (n - 1));
  return v;
}

// -- frequency grid and profiles ---------------------------------------------------------

struct KGrid {
  std::vector<double> magnitudes;
  std::vector<Vec3> directions{Vec3::UnitZ()};
  /// Weights for the isotropic integral of f(|k|) 4 pi |k|^2 d|k| (trapezoid in log|k|).
  std::vector<double> radial_weights;

  static KGrid log_grid(double k_min, double k_max, int n) {
    KGrid g;
    g.magnitudes = log_spaced(k_min, k_max, n);
    g.radial_weights.resize(g.magnitudes.size());
    const double ds = std::log(k_max / k_min) / (n - 1);
    for (std::size_t i = 0; i < g.magnitudes.size(); ++i) {
      const double end = (i == 0 || i + 1 == g.magnitudes.size()) ? 0.5 : 1.0;
      g.radial_weights[i] = end * ds * 4.0 * std::numbers::pi * std::pow(g.magnitudes[i], 3);
    }
    return g;
  }

  /// The same trapezoid rule on every other node (for error estimates). Needs an odd node count.
  std::vector<double> coarse_weights() const {
    const std::size_t n = magnitudes.size();
    std::vector<double> w(n, 0.0);
    if (n < 3 || n % 2 == 0) return w;
    const double ds = 2.0 * std::log(magnitudes.back() / magnitudes.front()) / (double(n) - 1.0);
    for (std::size_t i = 0; i < n; i += 2) {
      const double end = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
      w[i] = end * ds * 4.0 * std::numbers::pi * std::pow(magnitudes[i], 3);
    }
    return w;
  }

  bool valid() const {
    if (magnitudes.empty() || magnitudes.size() != radial_weights.size() || directions.empty()) return false;
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
      if (!(magnitudes[i] > 0.0) || !(radial_weights[i] > 0.0)) return false;
      if (i > 0 && !(magnitudes[i] > magnitudes[i - 1])) return false;
    }
    return true;
  }
};

/// Squared amplitude |U0(k)|^2 of isotropic initial data or source.
struct FrequencyProfile {
  enum class Kind { gaussian, power };
  Kind kind = Kind::gaussian;
  double width = 1.0;     ///< gaussian: |U0|^2 = exp(-2 |k|^2 / width^2)
  double exponent = 5.0;  ///< power: |U0|^2 = |k|^{-exponent}
  double k_lo = 0.0;      ///< support [k_lo, k_hi]
  double k_hi = std::numeric_limits<double>::infinity();

  static FrequencyProfile gaussian(double width = 1.0) { return {Kind::gaussian, width, 0.0, 0.0, std::numeric_limits<double>::infinity()}; }
  /// |U0|^2 = |k|^{-3-2 ell} on [1, k_hi]: the borderline profile for an ell-derivative budget.
  static FrequencyProfile high_frequency(double ell, double k_hi) { return {Kind::power, 1.0, 3.0 + 2.0 * ell, 1.0, k_hi}; }

  double density(double r) const {
    if (r < k_lo || r > k_hi) return 0.0;
    if (kind == Kind::gaussian) return std::exp(-2.0 * r * r / (width * width));
    return std::pow(r, -exponent);
  }
  std::string name() const {
    return kind == Kind::gaussian ? "gaussian(width=" + std::to_string(width) + ")"
                                  : "power(exponent=" + std::to_string(exponent) + ")";
  }
};

// -- per-mode propagation -----------------------------------------------------------------

/// exp(tG) y through an eigendecomposition of G, with a matrix-exponential
/// fallback when the eigenvectors are too ill-conditioned.
class SpectralPropagator {
 public:
  explicit SpectralPropagator(const ModeGenerator& gen, double tolerance = 1e-9) : gen_(gen.matrix) {
    Eigen::ComplexEigenSolver<MatXc> es(gen_);
    if (es.info() == Eigen::Success) {
      v_ = es.eigenvectors();
      lambda_ = es.eigenvalues();
      Eigen::PartialPivLU<MatXc> lu(v_);
      vinv_ = lu.inverse();
      const double scale = std::max(gen_.norm(), 1.0);
      const double res = (gen_ * v_ - v_ * lambda_.asDiagonal()).norm() / scale;
      const double inv = (v_ * vinv_ - MatXc::Identity(v_.rows(), v_.cols())).norm();
      const double cond = v_.norm() * vinv_.norm();
      diagonal_ok_ = res < tolerance && inv < tolerance && cond * 1e-16 < tolerance;
    }
  }

  bool diagonalizable() const { return diagonal_ok_; }

  VecXc at(const VecXc& y0, double t) const {
    if (!diagonal_ok_) return (t * gen_).exp() * y0;
    const VecXc modal = vinv_ * y0;
    return v_ * (modal.array() * (t * lambda_).array().exp()).matrix();
  }

 private:
  MatXc gen_;
  MatXc v_, vinv_;
  VecXc lambda_;
  bool diagonal_ok_ = false;
};

enum class ModeContent { mixed, fields };

/// Standardized unit-energy, constraint-consistent, charge-neutral state at
/// k = |k| d, with content defined in a frame adapted to d so that the mode
/// energy depends only on |k| (the discretization is rotation invariant).
inline ModeState standard_state(const VelocityBasis& basis, const Vec3& k, ModeContent content = ModeContent::mixed) {
  const int d = basis.dim();
  ModeState s = ModeState::zero(k, d);
  const double r = k.norm();
  const Vec3 dir = r > 0.0 ? Vec3(k / r) : Vec3::UnitZ();
  Vec3 t1 = dir.unitOrthogonal();
  Vec3 t2 = dir.cross(t1);
  if (content == ModeContent::mixed) {
    VecXc u = VecXc::Zero(d);
    u(0) = 1.0;
    for (int i = 0; i < 3; ++i) u(basis.unit_index(i)) = dir(i) + 0.5 * t1(i);
    // An isotropic temperature plus the traceless stress Q = (d d^T - t1 t1^T) / 2,
    // sum_ij Q_ij (xi_i xi_j - delta_ij) in normalized Hermite coordinates.
    const double s2 = std::sqrt(2.0);
    const Eigen::Matrix3d q = 0.5 * (dir * dir.transpose() - t1 * t1.transpose());
    for (int i = 0; i < 3; ++i) {
      MultiIndex two{0, 0, 0};
      two[static_cast<std::size_t>(i)] = 2;
      u(basis.index_of(two)) += 0.5 * s2 + s2 * q(i, i);
      for (int j = i + 1; j < 3; ++j) {
        MultiIndex mixed{0, 0, 0};
        mixed[static_cast<std::size_t>(i)] = 1;
        mixed[static_cast<std::size_t>(j)] = 1;
        u(basis.index_of(mixed)) += 2.0 * q(i, j);
      }
    }
    s.set_u({u, u});
  }
  s.set_e(t1.cast<cplx>());
  s.set_b(t2.cast<cplx>());
  impose_constraints(s);
  s.y /= s.y.norm();
  return s;
}

/// Base energy |U(t,k)|^2 of the standardized state at each requested time.
inline std::vector<double> mode_energy_series(const VelocityBasis& basis, const CollisionOperator& op, const Vec3& k,
                                              const std::vector<double>& times, ModeContent content) {
  const auto gen = assemble_generator(k, basis, op);
  const SpectralPropagator prop(gen);
  const ModeState s0 = standard_state(basis, k, content);
  std::vector<double> e(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) e[i] = prop.at(s0.y, times[i]).squaredNorm();
  return e;
}

// -- sweeps --------------------------------------------------------------------------------

struct ModeRecord {
  Vec3 k = Vec3::Zero();
  double p1 = 0.0;
  double fitted_rate = 0.0;  ///< -d log E / dt over the second half of the run
  bool envelope_ok = false;  ///< E(t) <= exp(-lambda_fit p1 t) E(0) at every sample
  bool asymptotic = false;   ///< late-time rate settled (two quarter-window rates within 10%)
};

struct SweepConfig {
  std::vector<Vec3> k_values;
  double t_end = 50.0;
  int samples = 201;
  ModeContent content = ModeContent::mixed;
  unsigned threads = 1;
};

inline std::vector<ModeRecord> sweep_modes(const SweepConfig& cfg, const VelocityBasis& basis,
                                           const CollisionOperator& op, const LyapunovWeights& w) {
  if (cfg.samples < 8) throw std::invalid_argument("sweep_modes: need at least 8 samples");
  std::vector<ModeRecord> out(cfg.k_values.size());
  std::vector<double> times(static_cast<std::size_t>(cfg.samples));
  for (int i = 0; i < cfg.samples; ++i) times[static_cast<std::size_t>(i)] = cfg.t_end * i / (cfg.samples - 1);
  parallel_for(cfg.k_values.size(), cfg.threads, [&](std::size_t idx) {
    const Vec3 k = cfg.k_values[idx];
    const auto gen = assemble_generator(k, basis, op);
    const SpectralPropagator prop(gen);
    const FunctionalForms forms(k, basis, op);
    const MatXc wm = forms.energy_matrix(w);
    const ModeState s0 = standard_state(basis, k, cfg.content);
    std::vector<double> e(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      const VecXc y = prop.at(s0.y, times[i]);
      e[i] = std::real(FunctionalForms::form(wm, y));
    }
    ModeRecord rec;
    rec.k = k;
    rec.p1 = rate_profile(k);
    auto rate = [&](std::size_t a, std::size_t b) {
      if (e[a] <= 0.0 || e[b] <= 0.0) return std::numeric_limits<double>::infinity();
      return -std::log(e[b] / e[a]) / (times[b] - times[a]);
    };
    const std::size_t n = times.size() - 1;
    rec.fitted_rate = rate(n / 2, n);
    const double r1 = rate(n / 2, 3 * n / 4), r2 = rate(3 * n / 4, n);
    rec.asymptotic = std::isfinite(r1) && std::isfinite(r2) && std::abs(r1 - r2) <= 0.1 * std::max(std::abs(r1), std::abs(r2));
    rec.envelope_ok = true;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (e[i] > std::exp(-w.lambda_fit * rec.p1 * times[i]) * e[0] * (1.0 + 1e-9) + 1e-14 * e[0]) rec.envelope_ok = false;
    out[idx] = rec;
  });
  return out;
}

// -- whole-space norms ------------------------------------------------------------------

struct L2Fit {
  int m = 0;
  std::vector<double> times;
  std::vector<double> norms;  ///< squared norms |grad^m U(t)|^2
  FitResult fit;
  double target = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct L2DecayConfig {
  KGrid grid;
  FrequencyProfile profile;
  ModeContent content = ModeContent::mixed;
  std::vector<int> m_values{0};
  std::vector<double> times;
  double t1 = 5.0;
  double t2 = 200.0;
  std::vector<double> targets;     ///< per m; NaN when no target
  std::vector<double> tolerances;  ///< per m
  double quadrature_tolerance = 0.01;
  unsigned threads = 1;
};

struct L2DecayResult {
  std::vector<L2Fit> fits;
  double max_quadrature_error = 0.0;  ///< relative |full - coarse| over all times and m
  std::vector<std::string> warnings;
};

/// |grad^m U(t)|^2 = sum_grid w_j |k_j|^{2m} |U0(k_j)|^2 E(t, k_j) / E(0, k_j), averaged over the direction set.
inline L2DecayResult l2_decay(const L2DecayConfig& cfg, const VelocityBasis& basis, const CollisionOperator& op) {
  if (!cfg.grid.valid()) throw std::invalid_argument("l2_decay: invalid frequency grid");
  const std::size_t nk = cfg.grid.magnitudes.size(), nd = cfg.grid.directions.size(), nt = cfg.times.size();
  std::vector<std::vector<double>> energy(nk * nd);
  parallel_for(nk * nd, cfg.threads, [&](std::size_t job) {
    const std::size_t i = job / nd, j = job % nd;
    const double r = cfg.grid.magnitudes[i];
    if (cfg.profile.density(r) == 0.0) {
      energy[job].assign(nt, 0.0);
      return;
    }
    energy[job] = mode_energy_series(basis, op, r * cfg.grid.directions[j].normalized(), cfg.times, cfg.content);
  });

  L2DecayResult res;
  const auto coarse = cfg.grid.coarse_weights();
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    const int m = cfg.m_values[mi];
    L2Fit f;
    f.m = m;
    f.times = cfg.times;
    f.norms.assign(nt, 0.0);
    std::vector<double> rough(nt, 0.0);
    for (std::size_t i = 0; i < nk; ++i) {
      const double r = cfg.grid.magnitudes[i];
      const double amp = std::pow(r, 2 * m) * cfg.profile.density(r) / double(nd);
      for (std::size_t j = 0; j < nd; ++j)
        for (std::size_t t = 0; t < nt; ++t) {
          f.norms[t] += cfg.grid.radial_weights[i] * amp * energy[i * nd + j][t];
          rough[t] += coarse[i] * amp * energy[i * nd + j][t];
        }
    }
    for (std::size_t t = 0; t < nt; ++t) {
      if (f.norms[t] > 0.0 && coarse[0] > 0.0)
        res.max_quadrature_error = std::max(res.max_quadrature_error, std::abs(f.norms[t] - rough[t]) / f.norms[t]);
    }
    f.fit = fit_exponent(f.times, f.norms, cfg.t1, cfg.t2);
    f.target = mi < cfg.targets.size() ? cfg.targets[mi] : std::numeric_limits<double>::quiet_NaN();
    f.tolerance = mi < cfg.tolerances.size() ? cfg.tolerances[mi] : 0.0;
    f.pass = std::isfinite(f.target) && std::abs(f.fit.slope - f.target) <= f.tolerance;
    res.fits.push_back(std::move(f));
  }
  if (res.max_quadrature_error > cfg.quadrature_tolerance)
    res.warnings.push_back("frequency quadrature error estimate " + std::to_string(res.max_quadrature_error) +
                           " exceeds tolerance " + std::to_string(cfg.quadrature_tolerance));
  return res;
}

// -- high-frequency certificate --------------------------------------------------------

struct CertificateRow {
  double t = 0.0;
  double sup_grid = 0.0;         ///< sup over grid |k| >= 1 of |k|^{-2 ell} exp(-lambda t / (4 |k|^2))
  double sup_exact = 0.0;        ///< same sup over the continuum |k| >= 1
  double maximizer_grid = 0.0;
  double maximizer_exact = 0.0;
};

struct HighFrequencyCertificate {
  double ell = 0.0;
  double lambda = 0.0;
  std::vector<CertificateRow> rows;
  double constant_grid = 0.0;   ///< max_t sup_grid (1+t)^ell
  double constant_exact = 0.0;  ///< max_t sup_exact (1+t)^ell
  double relative_gap = 0.0;
  bool envelope_ok = false;     ///< sup_grid <= constant_grid (1+t)^{-ell} at every t

  bool within(double tol) const { return relative_gap <= tol; }
};

/// Closed-form maximizer of s^{-ell} exp(-a/s) over s = |k|^2 in [1, s_max].
inline std::pair<double, double> certificate_sup_exact(double ell, double a, double s_max) {
  double s = ell > 0.0 ? a / ell : s_max;
  s = std::clamp(s, 1.0, s_max);
  return {std::pow(s, -ell) * std::exp(-a / s), std::sqrt(s)};
}

inline HighFrequencyCertificate high_frequency_certificate(double ell, double lambda, const std::vector<double>& t_grid,
                                                           const std::vector<double>& magnitudes) {
  if (ell < 0.0) throw std::invalid_argument("high_frequency_certificate: ell must be >= 0");
  HighFrequencyCertificate c;
  c.ell = ell;
  c.lambda = lambda;
  double k_max = 0.0;
  for (double r : magnitudes)
    if (r >= 1.0) k_max = std::max(k_max, r);
  if (k_max < 1.0) throw std::invalid_argument("high_frequency_certificate: no grid point with |k| >= 1");
  for (double t : t_grid) {
    CertificateRow row;
    row.t = t;
    const double a = lambda * t / 4.0;
    for (double r : magnitudes) {
      if (r < 1.0) continue;
      const double v = std::pow(r, -2.0 * ell) * std::exp(-a / (r * r));
      if (v > row.sup_grid) {
        row.sup_grid = v;
        row.maximizer_grid = r;
      }
    }
    std::tie(row.sup_exact, row.maximizer_exact) = certificate_sup_exact(ell, a, k_max * k_max);
    c.constant_grid = std::max(c.constant_grid, row.sup_grid * std::pow(1.0 + t, ell));
    c.constant_exact = std::max(c.constant_exact, row.sup_exact * std::pow(1.0 + t, ell));
    c.rows.push_back(row);
  }
  c.relative_gap = std::abs(c.constant_grid - c.constant_exact) / c.constant_exact;
  c.envelope_ok = true;
  for (const auto& r : c.rows)
    if (r.sup_grid > c.constant_grid * std::pow(1.0 + r.t, -ell) * (1.0 + 1e-12)) c.envelope_ok = false;
  return c;
}

// -- inhomogeneous problem -------------------------------------------------------------------

struct SourceSpec {
  VecXc velocity;  ///< stacked two-species content g0, must satisfy P g0 = 0
  double sigma = 1.5;  ///< temporal decay (1+s)^{-sigma}
  bool compact = false;  ///< g = g0 on [0, 1) and 0 afterwards
  FrequencyProfile profile = FrequencyProfile::gaussian(std::sqrt(2.0));

  double temporal(double s) const {
    if (compact) return s < 1.0 ? 1.0 : 0.0;
    return std::pow(1.0 + s, -sigma);
  }
  MicroSource micro_source() const {
    return separable_source(velocity, [this](double s) { return temporal(s); },
                            compact ? 1.0 : std::numeric_limits<double>::infinity());
  }
};

/// Microscopic source content: opposite first-order moments in the two
/// species, which drives the current without touching density, momentum or energy.
inline VecXc current_source_content(const VelocityBasis& basis, const Vec3& direction) {
  const int d = basis.dim();
  VecXc g = VecXc::Zero(2 * d);
  for (int i = 0; i < 3; ++i) {
    g(basis.unit_index(i)) = direction(i);
    g(d + basis.unit_index(i)) = -direction(i);
  }
  return g;
}

struct DuhamelConfig {
  KGrid grid;
  SourceSpec source;
  int m = 0;
  double ell = 1.5;
  double dt = 0.05;
  double t_end = 200.0;
  int record_every = 20;
  double t1 = 20.0;  ///< fit window
  double t2 = 200.0;
  unsigned threads = 1;
};

struct DuhamelResult {
  std::vector<double> times;
  std::vector<double> norms;  ///< |grad^m U^II(t)|^2
  std::vector<double> bound;  ///< right side of the convolution estimate without C
  double c_fit = 0.0;         ///< max over t of norms/bound
  double late_ratio_slope = 0.0;  ///< log-log slope of norms/bound over the fit window
  FitResult fit;
  double superposition_error = std::numeric_limits<double>::quiet_NaN();  ///< compact sources only
};

/// int_0^t (1+t-s)^{-p} phi(s)^2 ds by composite Gauss-Legendre.
inline double convolution_weight(double t, double p, const std::function<double(double)>& phi, double support_end) {
  const double hi = std::min(t, support_end);
  if (hi <= 0.0) return 0.0;
  const Rule1D gl = gauss_legendre(8);
  const int panels = std::max(16, static_cast<int>(std::ceil(hi * 4.0)));
  double sum = 0.0;
  const double h = hi / panels;
  for (int p_i = 0; p_i < panels; ++p_i) {
    const double a = p_i * h;
    for (std::size_t q = 0; q < gl.size(); ++q) {
      const double s = a + 0.5 * h * (gl.nodes[q] + 1.0);
      const double f = phi(s);
      sum += 0.5 * h * gl.weights[q] * std::pow(1.0 + t - s, -p) * f * f;
    }
  }
  return sum;
}

inline DuhamelResult duhamel_decay(const DuhamelConfig& cfg, const VelocityBasis& basis, const CollisionOperator& op) {
  if (!cfg.grid.valid()) throw std::invalid_argument("duhamel_decay: invalid frequency grid");
  const MicroSource src = cfg.source.micro_source();
  require_microscopic(src, basis, cfg.t_end);

  const auto steps = static_cast<long>(std::llround(cfg.t_end / cfg.dt));
  const std::size_t nk = cfg.grid.magnitudes.size();
  std::vector<std::vector<double>> energy(nk);
  const long one = static_cast<long>(std::llround(1.0 / cfg.dt));
  if (cfg.source.compact && std::abs(one * cfg.dt - 1.0) > 1e-12)
    throw std::invalid_argument("duhamel_decay: dt must divide the source support");

  // For compact sources: per k and record time t > 1, |U(t)|^2 and |U(t) - A(t-1) U(1)|^2.
  std::vector<std::vector<double>> oracle_sq(nk), diff_sq(nk);

  parallel_for(nk, cfg.threads, [&](std::size_t i) {
    const Vec3 k = cfg.grid.magnitudes[i] * cfg.grid.directions.front().normalized();
    const auto gen = assemble_generator(k, basis, op);
    const ExponentialStepper stepper(gen, cfg.dt);
    std::optional<SpectralPropagator> relaunch;
    VecXc y = VecXc::Zero(gen.matrix.rows());
    VecXc at_one;
    std::vector<double> e;
    e.push_back(0.0);
    for (long n = 0; n < steps; ++n) {
      y = stepper.advance(y, n * cfg.dt, &src);
      if (cfg.source.compact && n + 1 == one) {
        at_one = y;
        relaunch.emplace(gen);
      }
      if ((n + 1) % cfg.record_every == 0) {
        e.push_back(y.squaredNorm());
        if (relaunch && n + 1 > one) {
          const VecXc oracle = relaunch->at(at_one, (n + 1 - one) * cfg.dt);
          oracle_sq[i].push_back(oracle.squaredNorm());
          diff_sq[i].push_back((y - oracle).squaredNorm());
        }
      }
    }
    energy[i] = std::move(e);
  });

  DuhamelResult res;
  const std::size_t nt = energy.front().size();
  for (std::size_t t = 0; t < nt; ++t) res.times.push_back(t * cfg.record_every * cfg.dt);
  res.norms.assign(nt, 0.0);
  for (std::size_t i = 0; i < nk; ++i) {
    const double r = cfg.grid.magnitudes[i];
    const double amp = cfg.grid.radial_weights[i] * std::pow(r, 2 * cfg.m) * cfg.source.profile.density(r);
    for (std::size_t t = 0; t < nt; ++t) res.norms[t] += amp * energy[i][t];
  }
  if (cfg.source.compact && !oracle_sq.front().empty()) {
    // Whole-space relative L2 error of U^II against the relaunched sourceless solution.
    res.superposition_error = 0.0;
    for (std::size_t t = 0; t < oracle_sq.front().size(); ++t) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < nk; ++i) {
        const double r = cfg.grid.magnitudes[i];
        const double amp = cfg.grid.radial_weights[i] * std::pow(r, 2 * cfg.m) * cfg.source.profile.density(r);
        num += amp * diff_sq[i][t];
        den += amp * oracle_sq[i][t];
      }
      if (den > 0.0) res.superposition_error = std::max(res.superposition_error, std::sqrt(num / den));
    }
  }

  // Right side: |nu^{-1/2} g(s)|^2_{Z_1} = phi(s)^2 S0 sup|g|^2 and the weighted L2 term.
  const double s0 = weighted_source_norm(cfg.source.velocity, basis);
  double sup_profile = 0.0, high = 0.0;
  for (std::size_t i = 0; i < nk; ++i) {
    const double r = cfg.grid.magnitudes[i];
    sup_profile = std::max(sup_profile, cfg.source.profile.density(r));
    high += cfg.grid.radial_weights[i] * std::pow(r, 2.0 * (cfg.m + cfg.ell)) * cfg.source.profile.density(r);
  }
  const auto phi = [&](double s) { return cfg.source.temporal(s); };
  const double support = cfg.source.compact ? 1.0 : std::numeric_limits<double>::infinity();
  for (double t : res.times) {
    const double low_part = sup_profile * convolution_weight(t, 1.5 + cfg.m, phi, support);
    const double high_part = high * convolution_weight(t, cfg.ell, phi, support);
    res.bound.push_back(s0 * (low_part + high_part));
  }
  std::vector<double> ratio_t, ratio;
  for (std::size_t t = 0; t < nt; ++t) {
    if (res.bound[t] > 0.0) {
      res.c_fit = std::max(res.c_fit, res.norms[t] / res.bound[t]);
      if (res.norms[t] > 0.0) {
        ratio_t.push_back(res.times[t]);
        ratio.push_back(res.norms[t] / res.bound[t]);
      }
    }
  }
  res.fit = fit_exponent(res.times, res.norms, cfg.t1, cfg.t2);
  res.late_ratio_slope = fit_exponent(ratio_t, ratio, cfg.t1, cfg.t2).slope;
  return res;
}

}  // namespace vmb
