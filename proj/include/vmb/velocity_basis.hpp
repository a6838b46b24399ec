#pragma once

/// \file
/// Hermite-function Galerkin basis in velocity space for two-species
/// perturbations u = [u_+, u_-] around the global Maxwellian.
///
/// Basis functions are phi_alpha(xi) = psi_{a1}(xi_1) psi_{a2}(xi_2)
/// psi_{a3}(xi_3) M^{1/2}(xi) with psi_n = He_n / sqrt(n!) the normalized
/// probabilists' Hermite polynomials, so that <phi_alpha, phi_beta> =
/// delta_{alpha beta} in L^2(d xi). Everything in this library stores the
/// coefficient vector; "polynomial part" below means u / M^{1/2}.
///
/// Ordering is graded lexicographic: total degree ascending, then a1
/// descending, then a2 descending. Index 0 is (0,0,0) and indices 1..3 are
/// the unit multi-indices e_1, e_2, e_3.

#include "vmb/quadrature.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmb {

using Vec3 = Eigen::Vector3d;
using MultiIndex = std::array<int, 3>;

template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline double maxwellian(const Vec3& xi) {
  return std::pow(2.0 * std::numbers::pi, -1.5) * std::exp(-0.5 * xi.squaredNorm());
}

/// psi_0..psi_n at x.
inline void hermite_values(double x, int n, double* out) {
  out[0] = 1.0;
  if (n >= 1) out[1] = x;
  for (int m = 1; m < n; ++m) out[m + 1] = (x * out[m] - std::sqrt(static_cast<double>(m)) * out[m - 1]) / std::sqrt(m + 1.0);
}

template <class Scalar>
struct TwoSpeciesVector {
  VecX<Scalar> plus;
  VecX<Scalar> minus;

  static TwoSpeciesVector zero(Eigen::Index dim) {
    return {VecX<Scalar>::Zero(dim), VecX<Scalar>::Zero(dim)};
  }
  VecX<Scalar> stacked() const {
    VecX<Scalar> s(plus.size() + minus.size());
    s << plus, minus;
    return s;
  }
  static TwoSpeciesVector from_stacked(const VecX<Scalar>& s) {
    const Eigen::Index d = s.size() / 2;
    return {s.head(d), s.segment(d, d)};
  }
  VecX<Scalar> sum() const { return plus + minus; }
  VecX<Scalar> difference() const { return plus - minus; }
};

template <class Scalar>
struct MacroState {
  Scalar a_plus{};
  Scalar a_minus{};
  Eigen::Matrix<Scalar, 3, 1> b = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Scalar c{};
};

template <class Scalar>
struct MacroProjection {
  MacroState<Scalar> macro;
  TwoSpeciesVector<Scalar> micro;
};

class VelocityBasis {
 public:
  VelocityBasis(int degree_cap, int quad_order) : degree_cap_(degree_cap), quad_order_(quad_order) {
    if (degree_cap < 3)
      throw std::invalid_argument("VelocityBasis: degree_cap must be >= 3 (third-order moments are needed)");
    if (quad_order < degree_cap + 2)
      throw std::invalid_argument("VelocityBasis: quad_order must be >= degree_cap + 2");

    lookup_.assign(static_cast<std::size_t>((degree_cap + 1) * (degree_cap + 1) * (degree_cap + 1)), -1);
    for (int n = 0; n <= degree_cap; ++n)
      for (int a1 = n; a1 >= 0; --a1)
        for (int a2 = n - a1; a2 >= 0; --a2) {
          const MultiIndex m{a1, a2, n - a1 - a2};
          lookup_[flat(m)] = static_cast<int>(indices_.size());
          indices_.push_back(m);
        }

    const Rule1D gh = gauss_hermite(quad_order);
    const auto q = gh.size();
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < q; ++j)
        for (std::size_t k = 0; k < q; ++k) {
          nodes_.emplace_back(gh.nodes[i], gh.nodes[j], gh.nodes[k]);
          weights_.push_back(gh.weights[i] * gh.weights[j] * gh.weights[k]);
        }

    values_.resize(static_cast<Eigen::Index>(nodes_.size()), dim());
    for (std::size_t n = 0; n < nodes_.size(); ++n) values_.row(static_cast<Eigen::Index>(n)) = evaluate(nodes_[n]).transpose();

    for (int i = 0; i < 3; ++i) {
      position_[i] = Eigen::MatrixXd::Zero(dim(), dim());
      for (int beta = 0; beta < dim(); ++beta) {
        MultiIndex up = indices_[static_cast<std::size_t>(beta)];
        up[static_cast<std::size_t>(i)] += 1;
        const int alpha = index_of(up);
        if (alpha >= 0) {
          const double v = std::sqrt(static_cast<double>(up[static_cast<std::size_t>(i)]));
          position_[i](alpha, beta) = v;
          position_[i](beta, alpha) = v;
        }
      }
    }

    one_row_ = moment_row([](const Vec3&) { return 1.0; });
    c_row_ = moment_row([](const Vec3& x) { return x.squaredNorm() - 3.0; });
    for (int i = 0; i < 3; ++i) {
      xi_rows_[i] = moment_row([i](const Vec3& x) { return x(i); });
      lambda_rows_[i] = moment_row([i](const Vec3& x) { return 0.1 * (x.squaredNorm() - 5.0) * x(i); });
      heat_flux_rows_[i] = moment_row([i](const Vec3& x) { return (x.squaredNorm() - 3.0) * x(i); });
      for (int j = 0; j < 3; ++j) {
        theta_rows_[i][j] = moment_row([i, j](const Vec3& x) { return x(i) * x(j) - 1.0; });
        second_rows_[i][j] = moment_row([i, j](const Vec3& x) { return x(i) * x(j); });
      }
    }
  }

  int degree_cap() const { return degree_cap_; }
  int quad_order() const { return quad_order_; }
  int dim() const { return static_cast<int>(indices_.size()); }
  const std::vector<MultiIndex>& multi_indices() const { return indices_; }

  /// -1 when the multi-index is outside the truncation.
  int index_of(const MultiIndex& m) const {
    for (int v : m)
      if (v < 0 || v > degree_cap_) return -1;
    return lookup_[flat(m)];
  }
  int unit_index(int i) const { return 1 + i; }

  const std::vector<Vec3>& quad_nodes() const { return nodes_; }
  const std::vector<double>& quad_weights() const { return weights_; }
  /// Polynomial parts of all basis functions at the quadrature nodes (nodes x dim).
  const Eigen::MatrixXd& node_values() const { return values_; }

  /// Polynomial parts psi_alpha(xi) of all basis functions at an arbitrary point.
  Eigen::VectorXd evaluate(const Vec3& xi) const {
    std::vector<double> h[3];
    for (int i = 0; i < 3; ++i) {
      h[i].resize(static_cast<std::size_t>(degree_cap_) + 1);
      hermite_values(xi(i), degree_cap_, h[i].data());
    }
    Eigen::VectorXd out(dim());
    for (int a = 0; a < dim(); ++a) {
      const auto& m = indices_[static_cast<std::size_t>(a)];
      out(a) = h[0][static_cast<std::size_t>(m[0])] * h[1][static_cast<std::size_t>(m[1])] * h[2][static_cast<std::size_t>(m[2])];
    }
    return out;
  }

  /// Galerkin matrix of multiplication by xi_i: <phi_alpha, xi_i phi_beta>.
  const Eigen::MatrixXd& position_matrix(int i) const { return position_[i]; }

  /// Coefficients of f(xi) M^{1/2} for a polynomial f of degree <= degree_cap.
  Eigen::VectorXd project_function(const std::function<double(const Vec3&)>& f) const {
    return moment_row(f).transpose();
  }

  /// Row r with r * w = <f M^{1/2}, w> for a polynomial f, by tensor quadrature.
  Eigen::RowVectorXd moment_row(const std::function<double(const Vec3&)>& f) const {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dim());
    for (std::size_t n = 0; n < nodes_.size(); ++n) row += weights_[n] * f(nodes_[n]) * values_.row(static_cast<Eigen::Index>(n));
    return row;
  }

  const Eigen::RowVectorXd& one_row() const { return one_row_; }
  const Eigen::RowVectorXd& xi_row(int i) const { return xi_rows_[i]; }
  const Eigen::RowVectorXd& energy_row() const { return c_row_; }
  const Eigen::RowVectorXd& theta_row(int i, int j) const { return theta_rows_[i][j]; }
  const Eigen::RowVectorXd& lambda_row(int i) const { return lambda_rows_[i]; }
  const Eigen::RowVectorXd& second_moment_row(int i, int j) const { return second_rows_[i][j]; }
  const Eigen::RowVectorXd& heat_flux_row(int i) const { return heat_flux_rows_[i]; }

  /// Polynomial part of a coefficient vector at every quadrature node.
  template <class Scalar>
  VecX<Scalar> nodal(const VecX<Scalar>& coeffs) const {
    return values_.cast<Scalar>() * coeffs;
  }

  /// Quadrature L^2_xi inner product (u | v) = sum u conj(v) of two coefficient vectors.
  template <class Scalar>
  Scalar quad_inner(const VecX<Scalar>& u, const VecX<Scalar>& v) const {
    const VecX<Scalar> pu = nodal(u);
    const VecX<Scalar> pv = nodal(v);
    Scalar s{};
    for (Eigen::Index n = 0; n < pu.size(); ++n) s += weights_[static_cast<std::size_t>(n)] * pu(n) * conj_(pv(n));
    return s;
  }

  Eigen::MatrixXd gram_matrix() const { return values_.transpose() * Eigen::VectorXd::Map(weights_.data(), static_cast<Eigen::Index>(weights_.size())).asDiagonal() * values_; }

  /// "index: (a1,a2,a3)" lines; stable for a given degree cap.
  std::string ordering_table() const {
    std::ostringstream os;
    for (int a = 0; a < dim(); ++a) {
      const auto& m = indices_[static_cast<std::size_t>(a)];
      os << a << ": (" << m[0] << "," << m[1] << "," << m[2] << ")\n";
    }
    return os.str();
  }

  // -- macroscopic projector ------------------------------------------------

  template <class Scalar>
  MacroState<Scalar> macro_coefficients(const TwoSpeciesVector<Scalar>& u) const {
    MacroState<Scalar> m;
    m.a_plus = row_dot(one_row_, u.plus);
    m.a_minus = row_dot(one_row_, u.minus);
    const VecX<Scalar> s = u.sum();
    for (int i = 0; i < 3; ++i) m.b(i) = Scalar(0.5) * row_dot(xi_rows_[i], s);
    m.c = row_dot(c_row_, s) / Scalar(12.0);
    return m;
  }

  /// Coefficients of P_+ u (first) and P_- u (second) from macro values.
  template <class Scalar>
  TwoSpeciesVector<Scalar> macro_vector(const MacroState<Scalar>& m) const {
    auto out = TwoSpeciesVector<Scalar>::zero(dim());
    const double r2 = std::sqrt(2.0);
    for (int i = 0; i < 3; ++i) {
      out.plus(unit_index(i)) = m.b(i);
      MultiIndex two{0, 0, 0};
      two[static_cast<std::size_t>(i)] = 2;
      out.plus(index_of(two)) = m.c * Scalar(r2);
    }
    out.minus = out.plus;
    out.plus(0) = m.a_plus;
    out.minus(0) = m.a_minus;
    return out;
  }

  template <class Scalar>
  MacroProjection<Scalar> project_P(const TwoSpeciesVector<Scalar>& u) const {
    MacroProjection<Scalar> r;
    r.macro = macro_coefficients(u);
    const auto pu = macro_vector(r.macro);
    r.micro = {u.plus - pu.plus, u.minus - pu.minus};
    return r;
  }

  /// Theta_ij(w) = <(xi_i xi_j - 1) M^{1/2}, w>.
  template <class Scalar>
  Eigen::Matrix<Scalar, 3, 3> theta_moment(const VecX<Scalar>& w) const {
    Eigen::Matrix<Scalar, 3, 3> t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) = row_dot(theta_rows_[i][j], w);
    return t;
  }

  /// Lambda_i(w) = <(|xi|^2 - 5) xi_i M^{1/2}, w> / 10.
  template <class Scalar>
  Eigen::Matrix<Scalar, 3, 1> lambda_moment(const VecX<Scalar>& w) const {
    Eigen::Matrix<Scalar, 3, 1> l;
    for (int i = 0; i < 3; ++i) l(i) = row_dot(lambda_rows_[i], w);
    return l;
  }

  /// Orthonormal basis (columns, stacked two-species coordinates) of the null space N:
  /// [1,0]M^{1/2}, [0,1]M^{1/2}, [xi_i, xi_i]M^{1/2}/sqrt2, [|xi|^2-3, |xi|^2-3]M^{1/2}/sqrt12.
  Eigen::MatrixXd null_space() const {
    const int d = dim();
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2 * d, 6);
    n(0, 0) = 1.0;
    n(d, 1) = 1.0;
    const double s2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < 3; ++i) {
      n(unit_index(i), 2 + i) = s2;
      n(d + unit_index(i), 2 + i) = s2;
      MultiIndex two{0, 0, 0};
      two[static_cast<std::size_t>(i)] = 2;
      // (|xi|^2 - 3) = sqrt2 * sum_i psi_{2 e_i}; norm^2 per species is 6.
      n(index_of(two), 5) = std::sqrt(2.0) / std::sqrt(12.0);
      n(d + index_of(two), 5) = std::sqrt(2.0) / std::sqrt(12.0);
    }
    return n;
  }

  /// Orthonormal basis of the orthogonal complement of N in the stacked space.
  Eigen::MatrixXd micro_space() const {
    const Eigen::MatrixXd n = null_space();
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(2 * dim(), 2 * dim()) - n * n.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(proj);
    // Eigenvalues are 0 (x6) then 1; keep the unit ones.
    return es.eigenvectors().rightCols(2 * dim() - 6);
  }

 private:
  template <class Scalar>
  static Scalar row_dot(const Eigen::RowVectorXd& r, const VecX<Scalar>& w) {
    return (r.cast<Scalar>() * w)(0);
  }
  template <class Scalar>
  static Scalar conj_(const Scalar& s) {
    if constexpr (std::is_same_v<Scalar, double>) return s;
    else return std::conj(s);
  }

  std::size_t flat(const MultiIndex& m) const {
    const int s = degree_cap_ + 1;
    return static_cast<std::size_t>((m[0] * s + m[1]) * s + m[2]);
  }

  int degree_cap_;
  int quad_order_;
  std::vector<MultiIndex> indices_;
  std::vector<int> lookup_;
  std::vector<Vec3> nodes_;
  std::vector<double> weights_;
  Eigen::MatrixXd values_;
  std::array<Eigen::MatrixXd, 3> position_;
  Eigen::RowVectorXd one_row_;
  Eigen::RowVectorXd c_row_;
  std::array<Eigen::RowVectorXd, 3> xi_rows_;
  std::array<Eigen::RowVectorXd, 3> lambda_rows_;
  std::array<Eigen::RowVectorXd, 3> heat_flux_rows_;
  std::array<std::array<Eigen::RowVectorXd, 3>, 3> theta_rows_;
  std::array<std::array<Eigen::RowVectorXd, 3>, 3> second_rows_;
};

inline VelocityBasis build_basis(int degree_cap, int quad_order = 0) {
  return VelocityBasis(degree_cap, quad_order > 0 ? quad_order : degree_cap + 2);
}

}  // namespace vmb
