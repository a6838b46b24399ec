#pragma once

/// \file
/// Linearized two-species hard-sphere collision operator on the Hermite
/// Galerkin basis.
///
/// For test polynomial p and u_s = h_s M^{1/2} the weak form is
///
///   <p M^{1/2}, L_s u> = \int B M M_* {2 h_s(xi) + h_+(xi_*) + h_-(xi_*)} [p(xi') - p(xi)]
///
/// with B = |(xi - xi_*) . omega|. In centre-of-mass variables V = (xi+xi_*)/2,
/// w = xi - xi_* the omega integral becomes (|w|/2) \int_{S^2} d sigma with
/// xi' = V + |w| sigma / 2, and every remaining integrand is a polynomial
/// times a Gaussian. The rule below (Gauss-Hermite in V, Gauss-Laguerre in
/// |w|^2/4, product rules for the two directions) is therefore exact once the
/// orders cover the polynomial degrees.
///
/// The multiplicative part of L_s is 2 nu(xi) (one loss term from each
/// partner species), so L = -2 N + K where N is the Galerkin matrix of nu.

#include "vmb/quadrature.hpp"
#include "vmb/velocity_basis.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vmb {

/// nu(xi) = \int\int |(xi - xi_*) . omega| M(xi_*) d omega d xi_*.
///
/// The sphere integral gives 2 pi |xi - xi_*|; the remaining Gaussian average
/// reduces to the 1D integral E[(r+Z)|r+Z|] / r with Z ~ N(0,1), r = |xi|,
/// which is evaluated in closed form.
inline double collision_frequency(const Vec3& xi) {
  const double r = xi.norm();
  const double two_pi = 2.0 * std::numbers::pi;
  if (r < 1e-8) return two_pi * std::sqrt(8.0 / std::numbers::pi) * (1.0 + r * r / 6.0);
  const double phi = std::exp(-0.5 * r * r) / std::sqrt(two_pi);
  const double signed_second = (r * r + 1.0) * std::erf(r / std::sqrt(2.0)) + 2.0 * r * phi;
  return two_pi * signed_second / r;
}

struct CollisionQuadrature {
  int com_order = 0;         ///< Gauss-Hermite points per axis for V
  int radial_order = 0;      ///< Gauss-Laguerre (alpha = 1) points for |w|^2/4
  int relative_polar = 0;    ///< direction of w
  int relative_azimuth = 0;
  int scatter_polar = 0;     ///< direction sigma of the post-collision relative velocity
  int scatter_azimuth = 0;

  /// Smallest orders that integrate the degree-2*degree_cap integrands exactly.
  static CollisionQuadrature exact_for(int degree_cap) {
    auto even = [](int n) { return n + (n % 2); };
    CollisionQuadrature q;
    q.com_order = degree_cap + 1;
    q.radial_order = (degree_cap + 2) / 2;
    q.relative_polar = degree_cap + 1;
    q.relative_azimuth = even(2 * degree_cap + 1);
    q.scatter_polar = (degree_cap + 2) / 2;
    q.scatter_azimuth = even(degree_cap + 1);
    return q;
  }
  static CollisionQuadrature uniform(int order) {
    return {order, order, order, order, order, order};
  }
  /// Fills zero fields from exact_for(degree_cap).
  CollisionQuadrature resolved(int degree_cap) const {
    const auto e = exact_for(degree_cap);
    CollisionQuadrature q = *this;
    if (q.com_order <= 0) q.com_order = e.com_order;
    if (q.radial_order <= 0) q.radial_order = e.radial_order;
    if (q.relative_polar <= 0) q.relative_polar = e.relative_polar;
    if (q.relative_azimuth <= 0) q.relative_azimuth = e.relative_azimuth;
    if (q.scatter_polar <= 0) q.scatter_polar = e.scatter_polar;
    if (q.scatter_azimuth <= 0) q.scatter_azimuth = e.scatter_azimuth;
    return q;
  }
  std::string key() const {
    std::ostringstream os;
    os << com_order << "-" << radial_order << "-" << relative_polar << "-" << relative_azimuth << "-" << scatter_polar
       << "-" << scatter_azimuth;
    return os.str();
  }
  bool operator==(const CollisionQuadrature&) const = default;
};

struct CollisionOperator {
  int degree_cap = 0;
  CollisionQuadrature quadrature;
  Eigen::MatrixXd nu_matrix;  ///< dim x dim, <phi_a, nu phi_b>
  Eigen::MatrixXd k_matrix;   ///< 2dim x 2dim, L + 2 diag(nu, nu)
  Eigen::MatrixXd l_matrix;   ///< 2dim x 2dim, symmetrized L
  double asymmetry = 0.0;     ///< ||L - L^T||_F / ||L||_F before symmetrization
  double lambda0 = 0.0;

  int dim() const { return static_cast<int>(nu_matrix.rows()); }

  /// blockdiag(N, N) in stacked two-species coordinates.
  Eigen::MatrixXd nu_two_species() const {
    const int d = dim();
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    n.topLeftCorner(d, d) = nu_matrix;
    n.bottomRightCorner(d, d) = nu_matrix;
    return n;
  }
};

class CollisionAssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct RawCollisionMatrices {
  Eigen::MatrixXd self;   // A
  Eigen::MatrixXd cross;  // C
  Eigen::MatrixXd nu;
};

inline RawCollisionMatrices integrate_collision(const VelocityBasis& basis, const CollisionQuadrature& q) {
  const int d = basis.dim();
  const Rule1D com = gauss_hermite(q.com_order);
  const Rule1D rad = gauss_laguerre(q.radial_order, 1.0);
  const SphereRule rel = sphere_product_rule(q.relative_polar, q.relative_azimuth);
  const SphereRule sca = sphere_product_rule(q.scatter_polar, q.scatter_azimuth);
  const double four_pi = 4.0 * std::numbers::pi;
  const double prefactor = 1.0 / (2.0 * std::pow(std::numbers::pi, 1.5));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  const Eigen::Index outer = static_cast<Eigen::Index>(rel.size());
  Eigen::MatrixXd gain(outer, d);  // weighted [p(xi') - p(xi)] rows
  Eigen::MatrixXd pre(outer, d);   // p(xi)
  Eigen::MatrixXd partner(outer, d);
  Eigen::MatrixXd loss(outer, d);

  RawCollisionMatrices out{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};

  // Fixed loop order keeps the summation (and hence the bits) reproducible.
  for (std::size_t i = 0; i < com.size(); ++i)
    for (std::size_t j = 0; j < com.size(); ++j)
      for (std::size_t k = 0; k < com.size(); ++k) {
        const Vec3 v = inv_sqrt2 * Vec3(com.nodes[i], com.nodes[j], com.nodes[k]);
        const double wv = com.weights[i] * com.weights[j] * com.weights[k];
        for (std::size_t m = 0; m < rad.size(); ++m) {
          const double r = 2.0 * std::sqrt(rad.nodes[m]);
          const double w0 = prefactor * wv * rad.weights[m];
          Eigen::VectorXd post = Eigen::VectorXd::Zero(d);
          for (std::size_t s = 0; s < sca.size(); ++s) post += sca.weights[s] * basis.evaluate(v + 0.5 * r * sca.nodes[s]);
          for (Eigen::Index o = 0; o < outer; ++o) {
            const Vec3& dir = rel.nodes[static_cast<std::size_t>(o)];
            const double w = w0 * rel.weights[static_cast<std::size_t>(o)];
            const Eigen::VectorXd here = basis.evaluate(v + 0.5 * r * dir);
            pre.row(o) = here.transpose();
            partner.row(o) = basis.evaluate(v - 0.5 * r * dir).transpose();
            gain.row(o) = w * (post - four_pi * here).transpose();
            loss.row(o) = (w * four_pi) * here.transpose();
          }
          out.self.noalias() += gain.transpose() * pre;
          out.cross.noalias() += gain.transpose() * partner;
          out.nu.noalias() += loss.transpose() * pre;
        }
      }
  return out;
}

}  // namespace detail

/// Assembles L without validation. Use check_collision() or assemble_L() to
/// validate.
inline CollisionOperator assemble_collision(const VelocityBasis& basis, const CollisionQuadrature& quad = {}) {
  const CollisionQuadrature q = quad.resolved(basis.degree_cap());
  const auto raw = detail::integrate_collision(basis, q);
  const int d = basis.dim();

  Eigen::MatrixXd l(2 * d, 2 * d);
  const Eigen::MatrixXd same = 2.0 * raw.self + raw.cross;
  l.topLeftCorner(d, d) = same;
  l.bottomRightCorner(d, d) = same;
  l.topRightCorner(d, d) = raw.cross;
  l.bottomLeftCorner(d, d) = raw.cross;

  CollisionOperator op;
  op.degree_cap = basis.degree_cap();
  op.quadrature = q;
  const double norm = l.norm();
  // A vanishing operator (degenerate quadrature) counts as fully asymmetric.
  op.asymmetry = norm > 0 ? (l - l.transpose()).norm() / norm : 1.0;
  op.l_matrix = 0.5 * (l + l.transpose());
  op.nu_matrix = 0.5 * (raw.nu + raw.nu.transpose());
  op.k_matrix = op.l_matrix + 2.0 * op.nu_two_species();
  return op;
}

/// Largest lambda0 with -<u, L u> >= lambda0 <nu {I-P}u, {I-P}u> on the
/// discrete space: the smallest generalized eigenvalue of (-L, N) restricted to
/// the microscopic subspace. Throws when the value is not positive.
inline double coercivity_constant(const CollisionOperator& op, const VelocityBasis& basis) {
  const Eigen::MatrixXd q = basis.micro_space();
  const Eigen::MatrixXd a = -(q.transpose() * op.l_matrix * q);
  const Eigen::MatrixXd b = q.transpose() * op.nu_two_species() * q;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()));
  if (ges.info() != Eigen::Success) throw CollisionAssemblyError("coercivity_constant: generalized eigensolver failed");
  const double lam = ges.eigenvalues()(0);
  if (!(lam > 0.0)) throw CollisionAssemblyError("coercivity_constant: non-positive value " + std::to_string(lam));
  return lam;
}

struct CollisionChecks {
  double asymmetry = 0.0;
  double spectral_norm = 0.0;
  double max_eigenvalue = 0.0;
  int kernel_dimension = 0;
  double kernel_angle = 0.0;  ///< sine of the largest principal angle to N
  double lambda0 = 0.0;
  bool symmetric = false;
  bool semidefinite = false;
  bool kernel_ok = false;
  bool coercive = false;

  bool ok() const { return symmetric && semidefinite && kernel_ok && coercive; }
};

struct CollisionTolerances {
  double asymmetry = 1e-8;
  double semidefinite = 1e-8;  ///< relative to the spectral norm
  double kernel = 1e-6;        ///< relative to the spectral norm
  double angle = 1e-6;
};

inline CollisionChecks check_collision(const CollisionOperator& op, const VelocityBasis& basis,
                                       const CollisionTolerances& tol = {}) {
  CollisionChecks c;
  c.asymmetry = op.asymmetry;
  c.symmetric = op.asymmetry <= tol.asymmetry;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.l_matrix);
  const Eigen::VectorXd& mu = es.eigenvalues();
  c.spectral_norm = mu.cwiseAbs().maxCoeff();
  c.max_eigenvalue = mu.maxCoeff();
  c.semidefinite = c.max_eigenvalue <= tol.semidefinite * c.spectral_norm;

  std::vector<Eigen::Index> kernel;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (std::abs(mu(i)) < tol.kernel * c.spectral_norm) kernel.push_back(i);
  c.kernel_dimension = static_cast<int>(kernel.size());
  if (c.kernel_dimension == 6) {
    Eigen::MatrixXd ker(mu.size(), 6);
    for (int i = 0; i < 6; ++i) ker.col(i) = es.eigenvectors().col(kernel[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd n = basis.null_space();
    // Residual of the computed kernel after projecting onto N.
    const Eigen::MatrixXd resid = ker - n * (n.transpose() * ker);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(resid);
    c.kernel_angle = svd.singularValues()(0);
    c.kernel_ok = c.kernel_angle <= tol.angle;
  } else {
    c.kernel_angle = 1.0;
  }

  try {
    c.lambda0 = coercivity_constant(op, basis);
    c.coercive = true;
  } catch (const CollisionAssemblyError&) {
    c.coercive = false;
  }
  return c;
}

/// Assembles and validates; throws CollisionAssemblyError on failure.
inline CollisionOperator assemble_L(const VelocityBasis& basis, const CollisionQuadrature& quad = {}) {
  CollisionOperator op = assemble_collision(basis, quad);
  const CollisionChecks c = check_collision(op, basis);
  if (!c.ok()) {
    std::ostringstream os;
    os << "assemble_L: validation failed (asymmetry " << c.asymmetry << ", max eigenvalue " << c.max_eigenvalue
       << ", kernel dimension " << c.kernel_dimension << "); quadrature is likely insufficient";
    throw CollisionAssemblyError(os.str());
  }
  op.lambda0 = c.lambda0;
  return op;
}

// -- textual cache ------------------------------------------------------------
//
//   vmb-collision 1
//   degree_cap <D>
//   quadrature <com> <radial> <rel_polar> <rel_azimuth> <sca_polar> <sca_azimuth>
//   asymmetry <value>
//   lambda0 <value>
//   matrix nu <rows> <cols>
//   <row-major values, one row per line>
//   matrix l <rows> <cols>
//   ...
//
// Values are written with 17 significant digits so a reload is bit-identical.

inline std::filesystem::path collision_cache_path(const std::filesystem::path& dir, int degree_cap,
                                                  const CollisionQuadrature& q) {
  return dir / ("collision_d" + std::to_string(degree_cap) + "_q" + q.key() + ".txt");
}

namespace detail {
inline void write_matrix(std::ostream& os, const char* name, const Eigen::MatrixXd& m) {
  os << "matrix " << name << " " << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
    os << "\n";
  }
}
inline Eigen::MatrixXd read_matrix(std::istream& is, const std::string& name) {
  std::string tag, got;
  Eigen::Index r = 0, c = 0;
  if (!(is >> tag >> got >> r >> c) || tag != "matrix" || got != name)
    throw std::runtime_error("collision cache: expected matrix " + name);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      if (!(is >> m(i, j))) throw std::runtime_error("collision cache: truncated matrix " + name);
  return m;
}
}  // namespace detail

inline void save_collision(const CollisionOperator& op, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(17);
  const auto& q = op.quadrature;
  os << "vmb-collision 1\n";
  os << "degree_cap " << op.degree_cap << "\n";
  os << "quadrature " << q.com_order << " " << q.radial_order << " " << q.relative_polar << " " << q.relative_azimuth
     << " " << q.scatter_polar << " " << q.scatter_azimuth << "\n";
  os << "asymmetry " << op.asymmetry << "\n";
  os << "lambda0 " << op.lambda0 << "\n";
  detail::write_matrix(os, "nu", op.nu_matrix);
  detail::write_matrix(os, "l", op.l_matrix);
}

inline CollisionOperator load_collision(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  std::string tag;
  int version = 0;
  CollisionOperator op;
  auto& q = op.quadrature;
  is >> tag >> version;
  if (tag != "vmb-collision" || version != 1) throw std::runtime_error("collision cache: bad header");
  is >> tag >> op.degree_cap;
  is >> tag >> q.com_order >> q.radial_order >> q.relative_polar >> q.relative_azimuth >> q.scatter_polar >>
      q.scatter_azimuth;
  is >> tag >> op.asymmetry;
  is >> tag >> op.lambda0;
  if (!is) throw std::runtime_error("collision cache: bad preamble");
  op.nu_matrix = detail::read_matrix(is, "nu");
  op.l_matrix = detail::read_matrix(is, "l");
  op.k_matrix = op.l_matrix + 2.0 * op.nu_two_species();
  return op;
}

/// Loads from the cache directory when present, otherwise assembles and stores.
inline CollisionOperator cached_collision(const VelocityBasis& basis, const CollisionQuadrature& quad,
                                          const std::filesystem::path& cache_dir) {
  const CollisionQuadrature q = quad.resolved(basis.degree_cap());
  const auto file = collision_cache_path(cache_dir, basis.degree_cap(), q);
  if (std::filesystem::exists(file)) return load_collision(file);
  CollisionOperator op = assemble_collision(basis, q);
  const CollisionChecks c = check_collision(op, basis);
  op.lambda0 = c.lambda0;
  std::filesystem::create_directories(cache_dir);
  save_collision(op, file);
  return op;
}

}  // namespace vmb
