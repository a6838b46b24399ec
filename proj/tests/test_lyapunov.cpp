#include "vmb/lyapunov.hpp"

#include <gtest/gtest.h>

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

const LyapunovWeights DEFAULT_W{0.01, 0.001, 0.1, 0.0, 0.0};

// (alpha | beta) = alpha conj(beta).
cplx ip(cplx a, cplx b) { return a * std::conj(b); }

// Velocity moments computed node by node from the polynomial values of u_+ and u_-.
struct NodalMoments {
  cplx a_plus, a_minus, c;
  Vec3c b, g, lambda;
  Eigen::Matrix3cd theta;
};

NodalMoments nodal_moments(const ModeState& s, const VelocityBasis& basis) {
  const int d = basis.dim();
  const auto& nodes = basis.quad_nodes();
  const auto& wq = basis.quad_weights();
  const VecXc fp = basis.node_values().cast<cplx>() * s.y.head(d);
  const VecXc fm = basis.node_values().cast<cplx>() * s.y.segment(d, d);
  NodalMoments m{};
  m.b.setZero();
  m.g.setZero();
  m.lambda.setZero();
  m.theta.setZero();
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const auto n = static_cast<Eigen::Index>(q);
    const Vec3& x = nodes[q];
    m.a_plus += wq[q] * fp(n);
    m.a_minus += wq[q] * fm(n);
    m.c += wq[q] * (x.squaredNorm() - 3.0) * (fp(n) + fm(n)) / 12.0;
    for (int i = 0; i < 3; ++i) {
      m.b(i) += wq[q] * x(i) * (fp(n) + fm(n)) * 0.5;
      m.g(i) += wq[q] * x(i) * (fp(n) - fm(n));
    }
  }
  // Microscopic sum w_+ + w_- at the nodes, then Theta and Lambda of it.
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const auto n = static_cast<Eigen::Index>(q);
    const Vec3& x = nodes[q];
    const cplx poly = m.b(0) * x(0) + m.b(1) * x(1) + m.b(2) * x(2) + m.c * (x.squaredNorm() - 3.0);
    const cplx w = (fp(n) - m.a_plus - poly) + (fm(n) - m.a_minus - poly);
    for (int i = 0; i < 3; ++i) {
      m.lambda(i) += wq[q] * (x.squaredNorm() - 5.0) * x(i) / 10.0 * w;
      for (int j = 0; j < 3; ++j) m.theta(i, j) += wq[q] * (x(i) * x(j) - 1.0) * w;
    }
  }
  return m;
}

cplx int1_oracle(const ModeState& s, const VelocityBasis& basis, const LyapunovWeights& w) {
  const auto m = nodal_moments(s, basis);
  const Vec3& k = s.k;
  const double w1 = 1.0 / (1.0 + k.squaredNorm());
  const cplx i{0.0, 1.0};
  cplx heat = 0.0, stress = 0.0, mass = 0.0;
  for (int a = 0; a < 3; ++a) {
    heat += 0.5 * ip(i * k(a) * m.c, m.lambda(a));
    for (int b = 0; b < 3; ++b)
      stress += ip(i * k(a) * m.b(b) + i * k(b) * m.b(a), 0.5 * m.theta(a, b) + (a == b ? 2.0 * m.c : cplx(0.0)));
    mass += ip(i * k(a) * 0.5 * (m.a_plus + m.a_minus), m.b(a));
  }
  return w1 * (heat + w.kappa1 * stress + w.kappa2 * mass);
}

cplx int2_oracle(const ModeState& s, const VelocityBasis& basis) {
  const auto m = nodal_moments(s, basis);
  const Vec3& k = s.k;
  const double k2 = k.squaredNorm();
  const cplx i{0.0, 1.0};
  const Vec3c e = s.e(), bf = s.b();
  const Vec3c kc = k.cast<cplx>();
  // Written out: Eigen's cross() conjugates complex results.
  const Vec3c kxb(kc(1) * bf(2) - kc(2) * bf(1), kc(2) * bf(0) - kc(0) * bf(2), kc(0) * bf(1) - kc(1) * bf(0));
  cplx first = 0.0, rot = 0.0, cur = 0.0;
  for (int a = 0; a < 3; ++a) {
    first += ip(m.g(a), i * k(a) * (m.a_plus - m.a_minus));
    rot += ip(-i * kxb(a), e(a));
    cur += ip(m.g(a), e(a));
  }
  return first / (1.0 + k2) + (rot - k2 * cur) / ((1.0 + k2) * (1.0 + k2));
}

std::vector<Vec3> axis_grid(std::initializer_list<double> mags) {
  std::vector<Vec3> out;
  const Vec3 dir = Vec3(1, 2, 2) / 3.0;
  for (double m : mags) out.push_back(m * dir);
  return out;
}

VecXc micro_profile(const VelocityBasis& basis) {
  VecXc g = VecXc::Zero(2 * basis.dim());
  g(basis.index_of({3, 0, 0})) = 1.0;
  g(basis.index_of({1, 1, 1})) = cplx(0.0, 0.5);
  g(basis.dim() + basis.index_of({0, 2, 1})) = -0.7;
  return g;
}

}  // namespace

TEST(RateProfile, Values) {
  EXPECT_EQ(rate_profile(Vec3::Zero()), 0.0);
  EXPECT_DOUBLE_EQ(rate_profile(Vec3(1, 0, 0)), 0.25);
  EXPECT_DOUBLE_EQ(rate_profile(Vec3(0, 3, 0)), 9.0 / 100.0);
}

TEST(InteractiveFunctional, VanishAtZeroFrequency) {
  std::mt19937_64 rng(3);
  const auto s = random_mode_state(Vec3::Zero(), basis4().dim(), rng);
  EXPECT_EQ(std::abs(interactive_functional_1(s, basis4(), op4(), {0.3, 0.2, 1.0, 0, 0})), 0.0);
  EXPECT_EQ(std::abs(interactive_functional_2(s, basis4(), op4())), 0.0);
}

TEST(InteractiveFunctional, FirstMatchesNodalOracle) {
  std::mt19937_64 rng(5);
  const LyapunovWeights w{0.3, 0.2, 1.0, 0.0, 0.0};
  for (const Vec3 k : {Vec3(1, 0, 0), Vec3(0.7, 0.3, -0.5), Vec3(0, -4, 2)}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto s = random_mode_state(k, basis4().dim(), rng);
      const cplx got = interactive_functional_1(s, basis4(), op4(), w);
      const cplx want = int1_oracle(s, basis4(), w);
      EXPECT_LT(std::abs(got - want), 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(InteractiveFunctional, SecondMatchesNodalOracle) {
  std::mt19937_64 rng(6);
  for (const Vec3 k : {Vec3(1, 0, 0), Vec3(0.7, 0.3, -0.5), Vec3(0, -4, 2)}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto s = random_mode_state(k, basis4().dim(), rng);
      const cplx got = interactive_functional_2(s, basis4(), op4());
      EXPECT_LT(std::abs(got - int2_oracle(s, basis4())), 1e-12);
    }
  }
}

TEST(InteractiveFunctional, SecondFieldOnlyExample) {
  // u = 0, E = e1, B = e2, k = e3: -i k x B = i e1, so the rotation term is i / (1+1)^2.
  auto s = ModeState::zero(Vec3(0, 0, 1), basis4().dim());
  s.set_e(Vec3c(1, 0, 0));
  s.set_b(Vec3c(0, 1, 0));
  const cplx v = interactive_functional_2(s, basis4(), op4());
  EXPECT_NEAR(v.real(), 0.0, 1e-15);
  EXPECT_NEAR(v.imag(), 0.25, 1e-15);
  EXPECT_NEAR(lyapunov_total(s, basis4(), op4(), DEFAULT_W).total, 2.0, 1e-15);
}

TEST(InteractiveFunctional, MacroscopicStateKeepsOnlyMassTerm) {
  // Pu with c = 0 and no microscopic part: heat and stress terms vanish.
  MacroState<cplx> mac;
  mac.a_plus = cplx(0.4, 0.1);
  mac.a_minus = cplx(-0.2, 0.3);
  mac.b = Vec3c(cplx(0.5, 0), cplx(0, -0.2), cplx(0.1, 0.1));
  mac.c = 0.0;
  auto s = ModeState::zero(Vec3(0.5, -1.0, 2.0), basis4().dim());
  s.set_u(basis4().macro_vector(mac));
  const LyapunovWeights w{0.3, 0.2, 1.0, 0.0, 0.0};
  const Vec3& k = s.k;
  cplx mass = 0.0;
  for (int i = 0; i < 3; ++i) mass += ip(cplx(0, 1) * k(i) * 0.5 * (mac.a_plus + mac.a_minus), mac.b(i));
  mass *= w.kappa2 / (1.0 + k.squaredNorm());
  const cplx stress_only = interactive_functional_1(s, basis4(), op4(), {0.3, 0.0, 1.0, 0, 0});
  const cplx with_mass = interactive_functional_1(s, basis4(), op4(), w);
  EXPECT_LT(std::abs(with_mass - stress_only - mass), 1e-14);
  // The stress term is i k_i b_j paired with 0: here Theta of a zero micro part and c = 0.
  EXPECT_LT(std::abs(stress_only), 1e-14);
}

TEST(LyapunovTotal, ZeroState) {
  const auto s = ModeState::zero(Vec3(0.3, 0.1, 0.2), basis4().dim());
  const auto r = lyapunov_total(s, basis4(), op4(), DEFAULT_W);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(r.dissipation, 0.0);
}

TEST(LyapunovTotal, NullSpaceAtZeroFrequency) {
  const Eigen::MatrixXd n = basis4().null_space();
  auto s = ModeState::zero(Vec3::Zero(), basis4().dim());
  s.y.head(2 * basis4().dim()) = (n.col(0) + n.col(1) - 2.0 * n.col(3) + 0.5 * n.col(5)).cast<cplx>();
  const auto r = lyapunov_total(s, basis4(), op4(), DEFAULT_W);
  EXPECT_NEAR(r.total, r.base, 1e-14);
  EXPECT_NEAR(r.dissipation, 0.0, 1e-13);
}

TEST(LyapunovTotal, QuadraticScaling) {
  std::mt19937_64 rng(8);
  auto s = random_mode_state(Vec3(0.7, 0.3, -0.5), basis4().dim(), rng);
  const auto r = lyapunov_total(s, basis4(), op4(), DEFAULT_W);
  const cplx alpha(1.5, -2.0);
  s.y *= alpha;
  const auto r2 = lyapunov_total(s, basis4(), op4(), DEFAULT_W);
  const double a2 = std::norm(alpha);
  EXPECT_NEAR(r2.total, a2 * r.total, 1e-12 * a2);
  EXPECT_NEAR(r2.dissipation, a2 * r.dissipation, 1e-11 * a2 * r.dissipation);
  EXPECT_LT(std::abs(r2.int1 - a2 * r.int1), 1e-12 * a2);
}

TEST(LyapunovTotal, ContinuousAtZeroFrequency) {
  std::mt19937_64 rng(9);
  const Vec3 dir = Vec3(1, 2, 2) / 3.0;
  auto base = random_mode_state(dir, basis4().dim(), rng);
  base.y(basis4().dim()) = base.y(0);  // neutral, so the longitudinal field stays bounded as k -> 0
  for (double mag : {1e-2, 1e-4, 1e-6}) {
    ModeState s = base;
    s.k = mag * dir;
    impose_constraints(s);
    const auto r = lyapunov_total(s, basis4(), op4(), {0.3, 0.2, 1.0, 0, 0});
    EXPECT_LT(std::abs(r.int1), 3.0 * mag * s.base_energy());
    EXPECT_LT(std::abs(r.int2), 3.0 * mag * s.base_energy());
  }
}

TEST(LyapunovTotal, DissipationNonNegative) {
  std::mt19937_64 rng(10);
  for (const Vec3 k : axis_grid({0.0, 0.01, 1.0, 100.0})) {
    for (int rep = 0; rep < 20; ++rep) {
      const auto s = random_mode_state(k, basis4().dim(), rng);
      EXPECT_GE(lyapunov_total(s, basis4(), op4(), DEFAULT_W).dissipation, -1e-14);
    }
  }
}

TEST(Dissipation, MicroscopicPartBoundedByMinimalFrequency) {
  // nu grows with |xi|, so <nu w, w> >= nu(0) |w|^2.
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd q = basis4().micro_space();
  const FunctionalForms f(Vec3(0.2, 0.0, 0.0), basis4(), op4());
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd c(q.cols());
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = n01(rng);
    auto s = ModeState::zero(f.k(), basis4().dim());
    s.y.head(q.rows()) = (q * c).cast<cplx>();
    const double d = std::real(FunctionalForms::form(f.dissipation_matrix(), s.y));
    EXPECT_GE(d, collision_frequency(Vec3::Zero()) * s.base_energy() * (1.0 - 1e-12));
  }
}

TEST(Dissipation, SmallestRatioIsRateProfile) {
  // A transverse magnetic field alone gives D / base = |k|^2 / (1+|k|^2)^2, the weakest direction.
  for (double mag : {0.1, 1.0, 10.0, 100.0}) {
    const Vec3 k = mag * Vec3(1, 2, 2) / 3.0;
    const FunctionalForms f(k, basis4(), op4());
    const MatXc z = constraint_subspace(k, basis4().dim());
    const auto [lo, hi] = generalized_extremes(f.dissipation_matrix(), MatXc::Identity(f.size(), f.size()), z);
    // Eigen roundoff scales with the largest entry, |k|^2 in the E block.
    EXPECT_NEAR(lo, rate_profile(k), 1e-9 * rate_profile(k) + 1e-14 * k.squaredNorm()) << "|k| = " << mag;
    EXPECT_GT(hi, lo);
  }
}

TEST(Equivalence, UnitWithoutInteractiveTerms) {
  const auto r = verify_equivalence(axis_grid({0.01, 1.0, 100.0}), {0.0, 0.0, 0.0, 0, 0}, basis4(), op4(), 100, 4);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.c_low, 1.0, 1e-12);
  EXPECT_NEAR(r.c_high, 1.0, 1e-12);
  EXPECT_FALSE(r.witness.has_value());
}

TEST(Equivalence, DefaultWeightsBracketOne) {
  const auto r = verify_equivalence(axis_grid({0.01, 0.1, 1.0, 10.0, 100.0}), DEFAULT_W, basis4(), op4(), 200, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.c_low, 0.0);
  EXPECT_LE(r.c_low, 1.0);
  EXPECT_GE(r.c_high, 1.0);
  EXPECT_LT(r.c_high, 2.0);
}

TEST(Equivalence, SampledWithinSpectralBounds) {
  for (const Vec3 k : axis_grid({0.1, 1.0, 10.0})) {
    const FunctionalForms f(k, basis4(), op4());
    const auto b = spectral_bounds(f, assemble_generator(k, basis4(), op4()), DEFAULT_W);
    const auto r = verify_equivalence({k}, DEFAULT_W, basis4(), op4(), 300, 2);
    EXPECT_GE(r.c_low, b.c_low - 1e-12);
    EXPECT_LE(r.c_high, b.c_high + 1e-12);
  }
}

TEST(Equivalence, LargeKappaThreeFailsWithWitness) {
  const auto r = verify_equivalence(axis_grid({0.01, 0.1, 1.0, 10.0, 100.0}), {0.01, 0.001, 1000.0, 0, 0}, basis4(),
                                    op4(), 200, 1);
  EXPECT_FALSE(r.pass);
  ASSERT_TRUE(r.witness.has_value());
  const auto br = lyapunov_total(*r.witness, basis4(), op4(), {0.01, 0.001, 1000.0, 0, 0});
  EXPECT_LE(br.total, 0.0);
  EXPECT_NEAR(br.total / br.base, r.c_low, 1e-9 * std::abs(r.c_low));
}

TEST(Equivalence, TooFewSamplesRejected) {
  EXPECT_THROW(verify_equivalence(axis_grid({1.0}), DEFAULT_W, basis4(), op4(), 50), std::invalid_argument);
}

TEST(Inequality, SourcelessTrajectoryDecays) {
  std::mt19937_64 rng(20);
  for (const Vec3 k : axis_grid({0.1, 1.0, 10.0})) {
    const auto s = random_mode_state(k, basis4().dim(), rng);
    const auto gen = assemble_generator(k, basis4(), op4());
    const auto traj = evolve(s, gen, nullptr, 0.01, 20.0);
    const auto r = verify_lyapunov_inequality(traj, DEFAULT_W, basis4(), op4());
    EXPECT_TRUE(r.feasible) << "|k| = " << k.norm();
    EXPECT_TRUE(r.inequality_ok);
    EXPECT_TRUE(r.gronwall_ok);
    EXPECT_GT(r.fitted_exponent, 0.0);
    const auto b = spectral_bounds(FunctionalForms(k, basis4(), op4()), gen, DEFAULT_W);
    EXPECT_GE(r.lambda_max, b.rate * (1.0 - 1e-3));
  }
}

TEST(Inequality, FixedRateAboveSampledMaximumFails) {
  std::mt19937_64 rng(21);
  const Vec3 k(0.5, 0.0, 0.0);
  const auto traj = evolve(random_mode_state(k, basis4().dim(), rng), assemble_generator(k, basis4(), op4()), nullptr,
                           0.01, 10.0);
  const auto probe = verify_lyapunov_inequality(traj, DEFAULT_W, basis4(), op4());
  LyapunovWeights w = DEFAULT_W;
  w.lambda_fit = 2.0 * probe.lambda_max;
  const auto r = verify_lyapunov_inequality(traj, w, basis4(), op4());
  EXPECT_FALSE(r.inequality_ok);
  EXPECT_FALSE(r.violation_times.empty());
}

TEST(Inequality, ZeroFrequencyEnergyNonIncreasing) {
  std::mt19937_64 rng(22);
  const Vec3 k = Vec3::Zero();
  const auto traj =
      evolve(random_mode_state(k, basis4().dim(), rng), assemble_generator(k, basis4(), op4()), nullptr, 0.01, 5.0);
  const auto r = verify_lyapunov_inequality(traj, DEFAULT_W, basis4(), op4());
  EXPECT_EQ(r.p1, 0.0);
  EXPECT_TRUE(r.inequality_ok);
  EXPECT_TRUE(r.gronwall_ok);
  for (std::size_t n = 1; n < r.energy.size(); ++n) EXPECT_LE(r.energy[n], r.energy[n - 1] * (1.0 + 1e-12));
}

TEST(Inequality, SourcedRunFitsFiniteConstant) {
  const Vec3 k(0.7, 0.3, -0.5);
  const auto src = separable_source(micro_profile(basis4()), [](double t) { return std::sin(t); }, 5.0);
  const auto traj = evolve(ModeState::zero(k, basis4().dim()), assemble_generator(k, basis4(), op4()), &src, 0.01,
                           10.0, {}, &basis4(), &op4());
  LyapunovWeights w = DEFAULT_W;
  w.lambda_fit = 0.05;
  const auto r = verify_lyapunov_inequality(traj, w, basis4(), op4(), &src);
  EXPECT_TRUE(std::isfinite(r.c_source));
  EXPECT_GE(r.c_source, 0.0);
  EXPECT_TRUE(r.inequality_ok);
  EXPECT_FALSE(r.gronwall_ok);
}

TEST(Inequality, ShortTrajectoryRejected) {
  Trajectory t;
  t.dt = 0.1;
  t.samples.push_back(ModeState::zero(Vec3(1, 0, 0), basis4().dim()));
  EXPECT_THROW(verify_lyapunov_inequality(t, DEFAULT_W, basis4(), op4()), std::invalid_argument);
}

TEST(DissipationBound, PositiveFloorAndFiniteIngredients) {
  std::mt19937_64 rng(30);
  for (const Vec3 k : axis_grid({0.1, 1.0, 10.0})) {
    const auto traj = evolve(random_mode_state(k, basis4().dim(), rng), assemble_generator(k, basis4(), op4()),
                             nullptr, 0.01, 10.0);
    const auto r = dissipation_lower_bound(traj, DEFAULT_W, basis4(), op4());
    EXPECT_TRUE(r.ok);
    EXPECT_GT(r.floor, 0.0);
    ASSERT_EQ(r.ingredients.size(), 3u);
    for (const auto& c : r.ingredients) EXPECT_TRUE(c.ok) << c.name << " at |k| = " << k.norm();
  }
}

TEST(Calibration, CoarseGridMeetsFloor) {
  const auto grid = axis_grid({0.1, 1.0, 10.0});
  const auto c = calibrate_weights(grid, basis4(), op4(), 0.5, 1);
  EXPECT_EQ(c.candidates, 4 * 3 * 2);
  EXPECT_GE(c.c_low, 0.5);
  EXPECT_GT(c.rate_floor, 0.0);
  EXPECT_GT(c.weights.kappa3, 0.0);
  EXPECT_LT(c.weights.kappa2, c.weights.kappa1);
}
