#include "vmb/collision.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace vmb;

namespace {

const VelocityBasis& basis4() {
  static const VelocityBasis b = build_basis(4);
  return b;
}
const CollisionOperator& op4() {
  static const CollisionOperator op = assemble_L(basis4());
  return op;
}

// <phi_a, L_+ [phi_b, 0]> as the 8-dimensional integral over (xi, xi_*, omega)
// with xi, xi_* ~ M and omega uniform, sampled by a Halton sequence:
//   4 pi E[ p_a(xi) (2 (p_b(xi') - p_b(xi)) + p_b(xi_*') - p_b(xi_*)) |(xi - xi_*).omega| ].
// With cross = true the test function sits on the other species: <phi_a, L_+ [0, phi_b]>
// keeps only the p_b(xi_*') - p_b(xi_*) term.
double monte_carlo_entry(const oracle::Exponents& a, const oracle::Exponents& b, std::uint64_t n, bool cross = false) {
  const int primes[8] = {2, 3, 5, 7, 11, 13, 17, 19};
  const double two_pi = 2.0 * std::numbers::pi;
  double sum = 0.0;
  for (std::uint64_t i = 1; i <= n; ++i) {
    double u[8];
    for (int d = 0; d < 8; ++d) u[d] = oracle::halton(i, primes[d]);
    double g[6];
    for (int p = 0; p < 3; ++p) {
      const double r = std::sqrt(-2.0 * std::log(1.0 - u[2 * p]));
      g[2 * p] = r * std::cos(two_pi * u[2 * p + 1]);
      g[2 * p + 1] = r * std::sin(two_pi * u[2 * p + 1]);
    }
    const double ct = 2.0 * u[6] - 1.0, st = std::sqrt(1.0 - ct * ct), ph = two_pi * u[7];
    const std::array<double, 3> om{st * std::cos(ph), st * std::sin(ph), ct};
    const std::array<double, 3> x{g[0], g[1], g[2]}, xs{g[3], g[4], g[5]};
    double dot = 0.0;
    for (int d = 0; d < 3; ++d) dot += (x[d] - xs[d]) * om[d];
    std::array<double, 3> xp, xsp;
    for (int d = 0; d < 3; ++d) {
      xp[d] = x[d] - dot * om[d];
      xsp[d] = xs[d] + dot * om[d];
    }
    const double self = cross ? 0.0 : 2.0 * (oracle::hermite3(b, xp) - oracle::hermite3(b, x));
    const double change = self + oracle::hermite3(b, xsp) - oracle::hermite3(b, xs);
    sum += oracle::hermite3(a, x) * change * std::abs(dot);
  }
  return 4.0 * std::numbers::pi * sum / static_cast<double>(n);
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = n01(rng);
  return v;
}

}  // namespace

TEST(Quadrature, GaussHermiteMatchesNormalMoments) {
  const Rule1D r = gauss_hermite(8);
  for (int n = 0; n <= 15; ++n) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], n);
    EXPECT_NEAR(s, oracle::normal_moment(n), 1e-12 * oracle::normal_moment(n + n % 2)) << n;
  }
}

TEST(Quadrature, SphereRuleIntegratesHarmonics) {
  const SphereRule s = sphere_product_rule(4, 8);
  double area = 0.0, z2 = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    area += s.weights[i];
    z2 += s.weights[i] * s.nodes[i](2) * s.nodes[i](2);
    xy += s.weights[i] * s.nodes[i](0) * s.nodes[i](1);
  }
  EXPECT_NEAR(area, 4.0 * std::numbers::pi, 1e-12);
  EXPECT_NEAR(z2, 4.0 * std::numbers::pi / 3.0, 1e-12);
  EXPECT_NEAR(xy, 0.0, 1e-12);
}

TEST(CollisionFrequency, ValueAtOrigin) {
  // nu(0) = 4 pi E|Z| with Z standard normal.
  EXPECT_NEAR(collision_frequency(Vec3::Zero()), 4.0 * std::numbers::pi * std::sqrt(2.0 / std::numbers::pi), 1e-12);
}

TEST(CollisionFrequency, MatchesMonteCarlo) {
  // Averaging over omega gives nu(xi) = 2 pi E|xi - Z|.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  for (const Vec3 xi : {Vec3(0.5, 0.0, 0.0), Vec3(1.0, -1.0, 2.0), Vec3(0.0, 0.0, 4.0)}) {
    double s = 0.0;
    const int n = 2000000;
    for (int i = 0; i < n; ++i) s += (xi - Vec3(n01(rng), n01(rng), n01(rng))).norm();
    EXPECT_NEAR(collision_frequency(xi), 2.0 * std::numbers::pi * s / n, 3e-3 * collision_frequency(xi));
  }
}

TEST(CollisionFrequency, GrowsLikeSpeed) {
  const double a = collision_frequency(Vec3(0, 0, 50.0)), b = collision_frequency(Vec3(0, 0, 100.0));
  EXPECT_NEAR(b / a, 2.0, 1e-3);
  EXPECT_NEAR(a / (2.0 * std::numbers::pi * 50.0), 1.0, 1e-3);
}

TEST(AssembleL, NuMatrixIsGalerkinOfFrequency) {
  const auto& basis = basis4();
  const Rule1D gh = gauss_hermite(40);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(basis.dim(), basis.dim());
  for (std::size_t i = 0; i < gh.size(); ++i)
    for (std::size_t j = 0; j < gh.size(); ++j)
      for (std::size_t k = 0; k < gh.size(); ++k) {
        const Vec3 x(gh.nodes[i], gh.nodes[j], gh.nodes[k]);
        const Eigen::VectorXd p = basis.evaluate(x);
        ref += (gh.weights[i] * gh.weights[j] * gh.weights[k] * collision_frequency(x)) * p * p.transpose();
      }
  EXPECT_LT((op4().nu_matrix - ref).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AssembleL, EntryMatchesMonteCarloOracle) {
  const auto basis = build_basis(3);
  const auto op = assemble_L(basis);
  for (const oracle::Exponents e : {oracle::Exponents{1, 1, 0}, oracle::Exponents{1, 0, 0}, oracle::Exponents{2, 0, 1}}) {
    const int a = basis.index_of(e);
    const double mc = monte_carlo_entry(e, e, 1u << 21);
    EXPECT_NEAR(op.l_matrix(a, a), mc, 0.01 * std::abs(mc)) << e[0] << e[1] << e[2];
  }
  const oracle::Exponents e{2, 0, 0};
  const int a = basis.index_of(e);
  const double mc = monte_carlo_entry(e, e, 1u << 21, true);
  EXPECT_NEAR(op.l_matrix(a, basis.dim() + a), mc, 0.01 * std::abs(mc));
}

TEST(AssembleL, AnnihilatesCollisionInvariants) {
  const auto& basis = basis4();
  const Eigen::MatrixXd n = basis.null_space();
  EXPECT_LT((op4().l_matrix * n).cwiseAbs().maxCoeff(), 1e-8);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(2 * basis.dim());
  mass(0) = 1.0;
  mass(basis.dim()) = 1.0;
  EXPECT_LT((op4().l_matrix * mass).norm(), 1e-8);
  Eigen::VectorXd mom = Eigen::VectorXd::Zero(2 * basis.dim());
  mom(1) = 1.0;
  mom(basis.dim() + 1) = 1.0;
  EXPECT_LT((op4().l_matrix * mom).norm(), 1e-8);
}

TEST(AssembleL, SelfAdjointDissipativeAndPLZero) {
  const auto& basis = basis4();
  const auto& l = op4().l_matrix;
  EXPECT_LE(op4().asymmetry, 1e-8);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd n = basis.null_space();
  for (int s = 0; s < 50; ++s) {
    const Eigen::VectorXd u = random_vector(l.rows(), rng), v = random_vector(l.rows(), rng);
    EXPECT_LE(std::abs((l * u).dot(v) - u.dot(l * v)), 1e-8 * u.norm() * v.norm());
    const Eigen::VectorXcd z = u.cast<std::complex<double>>() + std::complex<double>(0, 1) * v.cast<std::complex<double>>();
    EXPECT_LE((z.dot(l.cast<std::complex<double>>() * z)).real(), 1e-10 * z.squaredNorm());
    EXPECT_LT((n.transpose() * (l * u)).norm(), 1e-8 * u.norm());
  }
}

TEST(AssembleL, SpeciesExchangeSymmetry) {
  const int d = basis4().dim();
  Eigen::MatrixXd swap = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  swap.topRightCorner(d, d).setIdentity();
  swap.bottomLeftCorner(d, d).setIdentity();
  EXPECT_LT((swap * op4().l_matrix - op4().l_matrix * swap).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AssembleL, ChecksPassAtDegreeFour) {
  const auto c = check_collision(op4(), basis4());
  EXPECT_TRUE(c.symmetric);
  EXPECT_TRUE(c.semidefinite);
  EXPECT_EQ(c.kernel_dimension, 6);
  EXPECT_LE(c.kernel_angle, 1e-6);
  EXPECT_GT(c.lambda0, 0.0);
}

TEST(AssembleL, QuadratureDoublingIsConverged) {
  const auto& basis = basis4();
  const auto e = CollisionQuadrature::exact_for(4);
  CollisionQuadrature q2{2 * e.com_order, 2 * e.radial_order, 2 * e.relative_polar,
                         2 * e.relative_azimuth, 2 * e.scatter_polar, 2 * e.scatter_azimuth};
  const auto fine = assemble_collision(basis, q2);
  EXPECT_LT((fine.l_matrix - op4().l_matrix).norm(), 1e-10 * op4().l_matrix.norm());
}

TEST(AssembleL, UnderResolvedQuadratureFailsChecks) {
  const auto op = assemble_collision(basis4(), CollisionQuadrature::uniform(1));
  const auto c = check_collision(op, basis4());
  EXPECT_FALSE(c.symmetric);
  EXPECT_FALSE(c.ok());
  EXPECT_THROW(assemble_L(basis4(), CollisionQuadrature::uniform(1)), CollisionAssemblyError);
}

TEST(Coercivity, HoldsOnRandomMicroscopicVectors) {
  const auto& basis = basis4();
  const auto& op = op4();
  const Eigen::MatrixXd q = basis.micro_space();
  const Eigen::MatrixXd nu2 = op.nu_two_species();
  std::mt19937_64 rng(99);
  for (int s = 0; s < 1000; ++s) {
    const Eigen::VectorXd u = q * random_vector(q.cols(), rng);
    EXPECT_GE(-u.dot(op.l_matrix * u), op.lambda0 * u.dot(nu2 * u) * (1.0 - 1e-10));
  }
}

TEST(Coercivity, ConstantIsAttained) {
  // lambda0 is the smallest generalized eigenvalue, so some microscopic vector attains it.
  const auto& basis = basis4();
  const Eigen::MatrixXd q = basis.micro_space();
  const Eigen::MatrixXd a = -(q.transpose() * op4().l_matrix * q);
  const Eigen::MatrixXd b = q.transpose() * op4().nu_two_species() * q;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(a, b);
  const Eigen::VectorXd x = ges.eigenvectors().col(0);
  EXPECT_NEAR(x.dot(a * x) / x.dot(b * x), op4().lambda0, 1e-10);
}

TEST(Coercivity, NullSpaceBothSidesVanish) {
  const Eigen::MatrixXd n = basis4().null_space();
  for (int c = 0; c < 6; ++c) {
    const Eigen::VectorXd u = n.col(c);
    const auto p = basis4().project_P(TwoSpeciesVector<double>::from_stacked(u));
    EXPECT_LT(p.micro.stacked().norm(), 1e-12);
    EXPECT_LT(std::abs(u.dot(op4().l_matrix * u)), 1e-8);
  }
}

TEST(CollisionCache, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "vmb_collision_cache_test";
  std::filesystem::remove_all(dir);
  const auto basis = build_basis(3);
  const auto first = cached_collision(basis, {}, dir);
  const auto second = cached_collision(basis, {}, dir);
  EXPECT_EQ(first.quadrature, second.quadrature);
  EXPECT_EQ(first.lambda0, second.lambda0);
  EXPECT_EQ((first.l_matrix - second.l_matrix).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((first.nu_matrix - second.nu_matrix).cwiseAbs().maxCoeff(), 0.0);
  std::filesystem::remove_all(dir);
}
