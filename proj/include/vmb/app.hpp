#pragma once

/// \file
/// Subcommand implementations behind the vmblab executable. Each command
/// takes an effective manifest and returns an exit code, a JSON report and
/// any CSV side outputs; nothing is written to disk here.

#include "vmb/collision.hpp"
#include "vmb/decay.hpp"
#include "vmb/fourier_mode.hpp"
#include "vmb/lyapunov.hpp"
#include "vmb/manifest.hpp"
#include "vmb/parallel.hpp"
#include "vmb/velocity_basis.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace vmb {

using Json = nlohmann::ordered_json;

inline constexpr int REPORT_SCHEMA_VERSION = 1;

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config_error = 2 };

struct CommandOutput {
  int exit_code = exit_ok;
  Json report;
  std::vector<std::pair<std::string, std::string>> csv_files;  ///< (relative path, contents)
  std::vector<std::string> messages;
};

/// Hash of the effective manifest; the output directory is excluded so that
/// reports do not depend on where they are written.
inline std::string report_hash(RunManifest m) {
  m.out_dir.clear();
  return manifest_hash(m);
}

/// Independent per-job seed derived from the run seed (splitmix64 finalizer).
inline std::uint64_t job_seed(std::uint64_t seed, std::uint64_t job) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (job + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Json report_header(const std::string& kind, const RunManifest& m) {
  Json j;
  j["schema_version"] = REPORT_SCHEMA_VERSION;
  j["kind"] = kind;
  j["manifest_hash"] = report_hash(m);
  j["seed"] = m.seed;
  j["degree_cap"] = m.degree_cap;
  return j;
}

inline Json to_json(const Vec3& v) { return Json::array({v(0), v(1), v(2)}); }

inline Json to_json(const CollisionQuadrature& q) {
  return Json{{"com_order", q.com_order},           {"radial_order", q.radial_order},
              {"relative_polar", q.relative_polar}, {"relative_azimuth", q.relative_azimuth},
              {"scatter_polar", q.scatter_polar},   {"scatter_azimuth", q.scatter_azimuth}};
}

inline Json to_json(const LyapunovWeights& w) {
  return Json{{"kappa1", w.kappa1}, {"kappa2", w.kappa2}, {"kappa3", w.kappa3}, {"lambda_fit", w.lambda_fit}, {"c_source", w.c_source}};
}

inline Json to_json(const FitResult& f) {
  return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}, {"t1", f.t1}, {"t2", f.t2}, {"points", f.points}};
}

struct Model {
  VelocityBasis basis;
  CollisionOperator op;
};

inline Model build_model(const RunManifest& m) {
  VelocityBasis basis = build_basis(m.degree_cap, m.basis_quad_order);
  CollisionOperator op = m.cache_dir.empty() ? assemble_collision(basis, m.collision_quadrature)
                                             : cached_collision(basis, m.collision_quadrature, m.cache_dir);
  if (m.cache_dir.empty()) op.lambda0 = check_collision(op, basis).lambda0;
  return {std::move(basis), std::move(op)};
}

inline std::vector<Vec3> manifest_k_grid(const RunManifest& m) {
  const Vec3 dir = Vec3(m.k_direction[0], m.k_direction[1], m.k_direction[2]).normalized();
  std::vector<Vec3> grid;
  if (m.k_points == 1) return {m.k_min * dir};
  for (double r : log_spaced(m.k_min, m.k_max, m.k_points)) grid.push_back(r * dir);
  return grid;
}

inline LyapunovWeights manifest_weights(const RunManifest& m) {
  return {m.kappa1, m.kappa2, m.kappa3, m.lambda_fit, m.c_source};
}

/// Minimum over the grid of the exact Lyapunov rate on the constraint subspace.
inline double certified_rate(const std::vector<Vec3>& grid, const LyapunovWeights& w, const Model& model) {
  double rate = std::numeric_limits<double>::infinity();
  for (const auto& k : grid) {
    if (rate_profile(k) == 0.0) continue;
    const FunctionalForms f(k, model.basis, model.op);
    rate = std::min(rate, spectral_bounds(f, assemble_generator(k, model.basis, model.op), w).rate);
  }
  return rate;
}

// -- verify-collision --------------------------------------------------------------------------

inline CommandOutput cmd_verify_collision(const RunManifest& m, unsigned /*threads*/ = 1) {
  CommandOutput out;
  const Model model = build_model(m);
  const auto& basis = model.basis;
  const auto& op = model.op;
  const CollisionChecks c = check_collision(op, basis);

  Json j = report_header("verify-collision", m);
  j["basis_dim"] = basis.dim();
  j["quadrature"] = to_json(m.collision_quadrature.resolved(m.degree_cap));
  j["asymmetry"] = c.asymmetry;
  j["spectral_norm"] = c.spectral_norm;
  j["max_eigenvalue"] = c.max_eigenvalue;
  j["kernel_dimension"] = c.kernel_dimension;
  j["kernel_angle"] = c.kernel_angle;
  j["lambda0"] = c.lambda0;

  // -<u, L u> >= lambda0 |nu^{1/2} u|^2 on random microscopic vectors.
  int violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  if (c.coercive) {
    std::mt19937_64 rng(job_seed(m.seed, 0));
    std::normal_distribution<double> n01;
    const Eigen::MatrixXd micro = basis.micro_space();
    const Eigen::MatrixXd nu2 = op.nu_two_species();
    for (int s = 0; s < m.coercivity_samples; ++s) {
      Eigen::VectorXd x(micro.cols());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n01(rng);
      const Eigen::VectorXd u = micro * x;
      const double lhs = -u.dot(op.l_matrix * u);
      const double weighted = u.dot(nu2 * u);
      min_ratio = std::min(min_ratio, lhs / weighted);
      if (lhs < c.lambda0 * weighted * (1.0 - 1e-10)) ++violations;
    }
  }
  j["coercivity"] = Json{{"samples", c.coercive ? m.coercivity_samples : 0},
                         {"violations", violations},
                         {"min_ratio", std::isfinite(min_ratio) ? Json(min_ratio) : Json(nullptr)}};
  const bool coercivity_ok = c.coercive && violations == 0;
  j["checks"] = Json{{"symmetric", c.symmetric},
                     {"semidefinite", c.semidefinite},
                     {"kernel", c.kernel_ok},
                     {"coercive", c.coercive},
                     {"coercivity_samples", coercivity_ok}};
  const bool pass = c.ok() && coercivity_ok;
  j["pass"] = pass;
  if (!c.symmetric) out.messages.push_back("symmetry check failed (asymmetry " + std::to_string(c.asymmetry) + ")");
  if (!c.semidefinite) out.messages.push_back("semidefiniteness check failed");
  if (!c.kernel_ok) out.messages.push_back("kernel check failed (dimension " + std::to_string(c.kernel_dimension) + ")");
  if (!c.coercive) out.messages.push_back("coercivity constant is not positive");
  if (violations > 0) out.messages.push_back(std::to_string(violations) + " coercivity violations");
  out.report = std::move(j);
  out.exit_code = pass ? exit_ok : exit_check_failed;
  return out;
}

// -- verify-lyapunov ------------------------------------------------------------------------------

inline CommandOutput cmd_verify_lyapunov(const RunManifest& m, unsigned threads = 1) {
  CommandOutput out;
  const Model model = build_model(m);
  const auto& basis = model.basis;
  const auto& op = model.op;
  const auto grid = manifest_k_grid(m);

  LyapunovWeights w = manifest_weights(m);
  Json j = report_header("verify-lyapunov", m);
  if (m.weights_mode == "calibrate") {
    const auto cal = calibrate_weights(grid, basis, op);
    w.kappa1 = cal.weights.kappa1;
    w.kappa2 = cal.weights.kappa2;
    w.kappa3 = cal.weights.kappa3;
    j["calibration"] = Json{{"candidates", cal.candidates}, {"c_low", cal.c_low}, {"c_high", cal.c_high}, {"rate_floor", cal.rate_floor}};
  }
  Json kg = Json::array();
  for (const auto& k : grid) kg.push_back(to_json(k));
  j["k_grid"] = kg;

  const auto eq = verify_equivalence(grid, w, basis, op, m.equivalence_samples, job_seed(m.seed, 1));
  j["c_low"] = eq.c_low;
  j["c_high"] = eq.c_high;
  if (!eq.pass) {
    j["weights"] = to_json(w);
    j["lambda_fit"] = nullptr;
    j["c_source"] = nullptr;
    j["per_k"] = Json::array();
    Json wit;
    wit["k"] = to_json(eq.witness->k);
    Json ys = Json::array();
    for (Eigen::Index i = 0; i < eq.witness->y.size(); ++i) ys.push_back(Json::array({eq.witness->y(i).real(), eq.witness->y(i).imag()}));
    wit["state"] = ys;
    wit["ratio"] = eq.c_low;
    j["equivalence_witness"] = wit;
    j["pass"] = false;
    out.messages.push_back("equivalence failed: c_low = " + std::to_string(eq.c_low));
    out.report = std::move(j);
    out.exit_code = exit_check_failed;
    return out;
  }

  // Sourceless trajectories, one job per (k, state).
  const std::size_t nk = grid.size(), ns = static_cast<std::size_t>(m.random_states);
  std::vector<Trajectory> trajs(nk * ns);
  EvolveOptions eo;
  eo.integrator = m.integrator == "split" ? Integrator::split : Integrator::exponential;
  eo.split_tolerance = m.split_tolerance;
  parallel_for(nk * ns, threads, [&](std::size_t job) {
    const Vec3 k = grid[job / ns];
    std::mt19937_64 rng(job_seed(m.seed, 100 + job));
    const ModeState s0 = random_mode_state(k, basis.dim(), rng);
    const auto gen = assemble_generator(k, basis, op);
    trajs[job] = evolve(s0, gen, nullptr, m.dt, m.t_end, eo, &basis, &op);
  });

  // Uniform lambda: the largest value feasible for every trajectory.
  std::vector<LyapunovInequalityReport> first(trajs.size());
  LyapunovWeights probe = w;
  probe.lambda_fit = 0.0;
  parallel_for(trajs.size(), threads, [&](std::size_t i) { first[i] = verify_lyapunov_inequality(trajs[i], probe, basis, op); });
  double lambda = std::numeric_limits<double>::infinity();
  for (const auto& r : first)
    if (r.p1 > 0.0) lambda = std::min(lambda, r.lambda_max);
  if (!std::isfinite(lambda)) lambda = 0.0;
  if (m.lambda_fit > 0.0) lambda = m.lambda_fit;
  w.lambda_fit = lambda;
  const double certified = certified_rate(grid, w, model);

  std::vector<LyapunovInequalityReport> second(trajs.size());
  std::vector<DissipationReport> diss(trajs.size());
  parallel_for(trajs.size(), threads, [&](std::size_t i) {
    second[i] = verify_lyapunov_inequality(trajs[i], w, basis, op);
    diss[i] = dissipation_lower_bound(trajs[i], w, basis, op);
  });

  // Grid-uniform ingredient constants.
  std::vector<double> c_uniform(3, 0.0);
  for (const auto& d : diss)
    for (std::size_t q = 0; q < d.ingredients.size(); ++q) c_uniform[q] = std::max(c_uniform[q], d.ingredients[q].c_fit);

  bool all_ok = lambda > 0.0;
  Json per_k = Json::array();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& r = second[i];
    const auto& d = diss[i];
    Json ing = Json::array();
    for (std::size_t q = 0; q < d.ingredients.size(); ++q) {
      const auto& c = d.ingredients[q];
      ing.push_back(Json{{"name", c.name}, {"lambda", c.lambda}, {"c_fit", c.c_fit}, {"c_uniform", c_uniform[q]}, {"ok", c.ok}});
      all_ok = all_ok && c.ok;
    }
    const bool mode_ok = (r.p1 == 0.0 || (r.inequality_ok && r.gronwall_ok)) && d.ok;
    all_ok = all_ok && mode_ok;
    per_k.push_back(Json{{"k", to_json(r.k)},
                         {"p1", r.p1},
                         {"lambda_max", std::isfinite(r.lambda_max) ? Json(r.lambda_max) : Json(nullptr)},
                         {"fitted_exponent", r.fitted_exponent},
                         {"inequality_ok", r.inequality_ok},
                         {"gronwall_ok", r.gronwall_ok},
                         {"dissipation_floor", d.floor},
                         {"ingredient_slacks", ing},
                         {"warnings", trajs[i].warnings}});
  }
  j["weights"] = to_json(w);
  j["lambda_fit"] = lambda;
  j["lambda_certified"] = certified;
  j["c_source"] = w.c_source;
  j["per_k"] = per_k;
  all_ok = all_ok && certified > 0.0;
  j["pass"] = all_ok;
  if (!all_ok) out.messages.push_back("Lyapunov inequality or dissipation checks failed");
  out.report = std::move(j);
  out.exit_code = all_ok ? exit_ok : exit_check_failed;
  return out;
}

// -- sweep-decay ----------------------------------------------------------------------------------

inline double decay_target(const RunManifest& m, int mv) {
  return m.profile == "gaussian" ? -(1.5 + mv) : -(m.ell - mv);
}
inline double decay_tolerance(const RunManifest& m, int mv) {
  return (m.profile == "gaussian" && mv >= 1) ? 0.2 : 0.15;
}

inline CommandOutput cmd_sweep_decay(const RunManifest& m, unsigned threads = 1) {
  CommandOutput out;
  const Model model = build_model(m);
  const auto& basis = model.basis;
  const auto& op = model.op;
  const auto grid = manifest_k_grid(m);
  LyapunovWeights w = manifest_weights(m);
  if (w.lambda_fit <= 0.0) w.lambda_fit = certified_rate(grid, w, model);

  Json j = report_header("sweep-decay", m);
  j["weights"] = to_json(w);

  SweepConfig sc;
  sc.k_values = grid;
  sc.t_end = m.mode_t_end;
  sc.samples = m.mode_samples;
  sc.threads = threads;
  const auto modes = sweep_modes(sc, basis, op, w);
  Json per_mode = Json::array();
  std::vector<std::string> warnings;
  bool envelopes = true;
  for (const auto& r : modes) {
    per_mode.push_back(Json{{"k", to_json(r.k)}, {"p1", r.p1}, {"fitted_rate", r.fitted_rate},
                            {"envelope_ok", r.envelope_ok}, {"asymptotic", r.asymptotic}});
    envelopes = envelopes && r.envelope_ok;
    if (!r.asymptotic) warnings.push_back("mode |k| = " + std::to_string(r.k.norm()) + " has not reached its asymptotic rate by t_end");
  }
  j["per_mode"] = per_mode;

  L2DecayConfig lc;
  if (m.profile == "gaussian") {
    lc.grid = KGrid::log_grid(m.decay_k_min, m.decay_k_max, m.decay_k_points);
    lc.profile = FrequencyProfile::gaussian();
  } else {
    lc.grid = KGrid::log_grid(std::max(1.0, m.decay_k_min), m.decay_k_max, m.decay_k_points);
    lc.profile = FrequencyProfile::high_frequency(m.ell, m.decay_k_max);
  }
  lc.m_values = m.m_values;
  lc.times = log_spaced(std::max(m.fit_t1, 1e-3), m.fit_t2, m.fit_points);
  lc.t1 = m.fit_t1;
  lc.t2 = m.fit_t2;
  for (int mv : m.m_values) {
    lc.targets.push_back(decay_target(m, mv));
    lc.tolerances.push_back(decay_tolerance(m, mv));
  }
  lc.threads = threads;
  const auto l2 = l2_decay(lc, basis, op);
  Json fits = Json::array();
  Json targets = Json::array(), tols = Json::array();
  bool fits_ok = true;
  for (const auto& f : l2.fits) {
    fits.push_back(Json{{"m", f.m}, {"profile", lc.profile.name()}, {"exponent", f.fit.slope}, {"fit", to_json(f.fit)},
                        {"target", f.target}, {"tolerance", f.tolerance}, {"pass", f.pass}});
    targets.push_back(f.target);
    tols.push_back(f.tolerance);
    fits_ok = fits_ok && f.pass;
  }
  for (const auto& wmsg : l2.warnings) warnings.push_back(wmsg);
  j["l2_fits"] = fits;
  j["targets"] = targets;
  j["tolerances"] = tols;
  j["quadrature_error"] = l2.max_quadrature_error;

  // Horizon chosen so the continuum maximizer |k|^2 = lambda t / (4 ell) sweeps the whole grid.
  const double k_top = lc.grid.magnitudes.back();
  const double t_cert = std::max(10.0, 4.0 * m.ell * k_top * k_top / w.lambda_fit);
  const auto cert = high_frequency_certificate(m.ell, w.lambda_fit, log_spaced(1.0, t_cert, 81), lc.grid.magnitudes);
  j["high_frequency_certificate"] = Json{{"ell", cert.ell},
                                         {"lambda", cert.lambda},
                                         {"constant_grid", cert.constant_grid},
                                         {"constant_exact", cert.constant_exact},
                                         {"relative_gap", cert.relative_gap},
                                         {"envelope_ok", cert.envelope_ok}};
  j["warnings"] = warnings;
  const bool pass = fits_ok && envelopes && cert.envelope_ok;
  j["pass"] = pass;
  out.messages = warnings;

  if (m.write_csv) {
    EvolveOptions eo;
    const double dt = m.mode_t_end / (m.mode_samples - 1);
    std::vector<std::string> csv(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
      const auto gen = assemble_generator(grid[i], basis, op);
      const auto traj = evolve(standard_state(basis, grid[i]), gen, nullptr, dt, m.mode_t_end, eo);
      std::ostringstream os;
      write_trajectory_csv(os, traj, basis);
      csv[i] = os.str();
    });
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::ostringstream name;
      name << "modes/mode_" << std::setw(3) << std::setfill('0') << i << ".csv";
      out.csv_files.emplace_back(name.str(), std::move(csv[i]));
    }
  }
  out.report = std::move(j);
  out.exit_code = pass ? exit_ok : exit_check_failed;
  return out;
}

// -- duhamel -----------------------------------------------------------------------------------------

inline SourceSpec manifest_source(const RunManifest& m, const VelocityBasis& basis) {
  SourceSpec s;
  if (m.source_content == "current") {
    s.velocity = current_source_content(basis, Vec3::UnitX());
  } else {
    s.velocity = VecXc::Zero(2 * basis.dim());
    s.velocity(0) = 1.0;  // density of the positive species: macroscopic
  }
  s.compact = m.source_time == "compact";
  s.sigma = m.source_sigma;
  return s;
}

inline CommandOutput cmd_duhamel(const RunManifest& m, unsigned threads = 1) {
  CommandOutput out;
  const Model model = build_model(m);
  DuhamelConfig c;
  c.grid = KGrid::log_grid(m.source_k_min, m.source_k_max, m.source_k_points);
  c.source = manifest_source(m, model.basis);
  c.m = m.source_m;
  c.ell = m.source_ell;
  c.dt = m.source_dt;
  c.t_end = m.source_t_end;
  c.record_every = m.source_record_every;
  c.t1 = m.source_t1;
  c.t2 = m.source_t2;
  c.threads = threads;

  Json j = report_header("duhamel", m);
  j["source"] = Json{{"content", m.source_content}, {"time", m.source_time}, {"sigma", m.source_sigma}};
  DuhamelResult r;
  try {
    r = duhamel_decay(c, model.basis, model.op);
  } catch (const InvalidSourceError& e) {
    j["rejected"] = e.what();
    j["pass"] = false;
    out.messages.push_back(std::string("source rejected: ") + e.what());
    out.report = std::move(j);
    out.exit_code = exit_config_error;
    return out;
  }
  j["m"] = c.m;
  j["ell"] = c.ell;
  j["times"] = r.times;
  j["norms"] = r.norms;
  j["bound"] = r.bound;
  j["c_fit"] = r.c_fit;
  j["late_ratio_slope"] = r.late_ratio_slope;
  j["fit"] = to_json(r.fit);
  j["superposition_error"] = std::isfinite(r.superposition_error) ? Json(r.superposition_error) : Json(nullptr);
  const bool bound_ok = std::isfinite(r.c_fit) && r.late_ratio_slope <= 0.05;
  const bool superposition_ok = !c.source.compact || r.superposition_error <= 1e-6;
  j["pass"] = bound_ok && superposition_ok;
  if (!bound_ok) out.messages.push_back("solution norm grows relative to the convolution bound");
  if (!superposition_ok) out.messages.push_back("superposition check failed");
  out.report = std::move(j);
  out.exit_code = (bound_ok && superposition_ok) ? exit_ok : exit_check_failed;
  return out;
}

}  // namespace vmb
