#pragma once

/// \file
/// Gauss rules built with the Golub-Welsch procedure, plus a product rule on
/// the unit sphere. All rules are returned as (nodes, weights) pairs.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace vmb {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Symmetric tridiagonal Jacobi matrix -> Gauss rule with the given total mass.
inline Rule1D golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& off, double mass) {
  const Eigen::Index n = diag.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    jac(i, i) = diag(i);
    if (i + 1 < n) {
      jac(i, i + 1) = off(i);
      jac(i + 1, i) = off(i);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  Rule1D rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    rule.weights[static_cast<std::size_t>(i)] = mass * v0 * v0;
  }
  return rule;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal density (probabilists'
/// convention). Exact for polynomials of degree <= 2n-1; weights sum to 1.
inline Rule1D gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd e(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) e(i - 1) = std::sqrt(static_cast<double>(i));
  return detail::golub_welsch(d, e, 1.0);
}

/// Generalized Gauss-Laguerre rule for the weight x^alpha e^{-x} on [0, inf).
inline Rule1D gauss_laguerre(int n, double alpha) {
  if (n < 1) throw std::invalid_argument("gauss_laguerre: order must be >= 1");
  Eigen::VectorXd d(n);
  Eigen::VectorXd e(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) d(i) = 2.0 * i + alpha + 1.0;
  for (int i = 1; i < n; ++i) e(i - 1) = std::sqrt(i * (i + alpha));
  return detail::golub_welsch(d, e, std::tgamma(alpha + 1.0));
}

/// Gauss-Legendre rule on [-1, 1].
inline Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd e(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) e(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
  return detail::golub_welsch(d, e, 2.0);
}

/// Product rule on S^2: Gauss-Legendre in cos(theta) times equispaced
/// azimuth. Integrates spherical polynomials of degree d exactly when
/// n_polar >= (d+1)/2 and n_azimuth >= d+1. Weights sum to 4*pi. With an
/// even azimuth count the node set is closed under x -> -x.
struct SphereRule {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

inline SphereRule sphere_product_rule(int n_polar, int n_azimuth) {
  if (n_polar < 1 || n_azimuth < 1) throw std::invalid_argument("sphere_product_rule: orders must be >= 1");
  const Rule1D gl = gauss_legendre(n_polar);
  SphereRule rule;
  const double dphi = 2.0 * std::numbers::pi / n_azimuth;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double ct = gl.nodes[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int j = 0; j < n_azimuth; ++j) {
      const double phi = (j + 0.5) * dphi;
      rule.nodes.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
      rule.weights.push_back(gl.weights[i] * dphi);
    }
  }
  return rule;
}

}  // namespace vmb
