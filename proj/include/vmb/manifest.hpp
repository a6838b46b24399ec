#pragma once

/// \file
/// Run manifest: a flat, sectioned key = value file. Lines starting with '#'
/// or ';' are comments. render() emits every key in a fixed order, and the
/// manifest hash is the SHA-256 of that canonical text.

#include "vmb/collision.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int MANIFEST_SCHEMA_VERSION = 1;

struct RunManifest {
  int schema_version = MANIFEST_SCHEMA_VERSION;

  // [basis]
  int degree_cap = 4;
  int basis_quad_order = 0;  ///< 0: degree_cap + 2

  // [collision]
  int collision_quad_order = 0;  ///< shortcut: same order for every sub-rule; 0 = exact rules
  CollisionQuadrature collision_quadrature;
  std::string cache_dir;
  int coercivity_samples = 1000;

  // [kgrid]
  double k_min = 0.01;
  double k_max = 100.0;
  int k_points = 9;
  std::vector<double> k_direction{1.0, 2.0, 2.0};

  // [integrator]
  std::string integrator = "exponential";
  double dt = 0.01;
  double t_end = 50.0;
  double split_tolerance = 1e-10;
  int random_states = 1;  ///< sourceless trajectories per k in verify-lyapunov

  // [weights]
  std::string weights_mode = "explicit";  ///< explicit | calibrate
  double kappa1 = 0.01;
  double kappa2 = 0.001;
  double kappa3 = 0.1;
  double lambda_fit = 0.0;  ///< 0: fitted from the trajectories
  double c_source = 0.0;
  int equivalence_samples = 200;

  // [decay]
  std::string profile = "gaussian";  ///< gaussian | high_frequency
  std::vector<int> m_values{0, 1};
  double ell = 2.0;
  double decay_k_min = 1e-4;
  double decay_k_max = 8.0;
  int decay_k_points = 201;
  double fit_t1 = 2000.0;
  double fit_t2 = 1e5;
  int fit_points = 41;
  double mode_t_end = 200.0;
  int mode_samples = 201;

  // [source]
  std::string source_content = "current";  ///< current | density (macroscopic; rejected)
  std::string source_time = "power";        ///< power | compact
  double source_sigma = 1.5;
  int source_m = 0;
  double source_ell = 1.5;
  double source_dt = 0.05;
  double source_t_end = 400.0;
  int source_record_every = 20;
  double source_t1 = 40.0;
  double source_t2 = 400.0;
  double source_k_min = 1e-3;
  double source_k_max = 8.0;
  int source_k_points = 61;

  // [seed]
  std::uint64_t seed = 1;

  // [output]
  std::string out_dir = "out";
  bool write_csv = true;

  bool operator==(const RunManifest&) const = default;
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    if constexpr (std::is_floating_point_v<T>) os << fmt_double(v[i]);
    else os << v[i];
  }
  return os.str();
}

template <class T>
std::vector<T> split(const std::string& s, const std::string& key) {
  std::istringstream is(s);
  std::vector<T> out;
  T x;
  while (is >> x) out.push_back(x);
  if (!is.eof()) throw ConfigError("manifest: malformed list for " + key + ": '" + s + "'");
  return out;
}

}  // namespace detail

inline std::string render_manifest(const RunManifest& m) {
  using detail::fmt_double;
  std::ostringstream os;
  const auto& q = m.collision_quadrature;
  os << "schema_version = " << m.schema_version << "\n\n";
  os << "[basis]\n"
     << "degree_cap = " << m.degree_cap << "\n"
     << "quad_order = " << m.basis_quad_order << "\n\n";
  os << "[collision]\n"
     << "quad_order = " << m.collision_quad_order << "\n"
     << "com_order = " << q.com_order << "\n"
     << "radial_order = " << q.radial_order << "\n"
     << "relative_polar = " << q.relative_polar << "\n"
     << "relative_azimuth = " << q.relative_azimuth << "\n"
     << "scatter_polar = " << q.scatter_polar << "\n"
     << "scatter_azimuth = " << q.scatter_azimuth << "\n"
     << "cache_dir = " << m.cache_dir << "\n"
     << "coercivity_samples = " << m.coercivity_samples << "\n\n";
  os << "[kgrid]\n"
     << "k_min = " << fmt_double(m.k_min) << "\n"
     << "k_max = " << fmt_double(m.k_max) << "\n"
     << "points = " << m.k_points << "\n"
     << "direction = " << detail::join(m.k_direction) << "\n\n";
  os << "[integrator]\n"
     << "method = " << m.integrator << "\n"
     << "dt = " << fmt_double(m.dt) << "\n"
     << "t_end = " << fmt_double(m.t_end) << "\n"
     << "split_tolerance = " << fmt_double(m.split_tolerance) << "\n"
     << "random_states = " << m.random_states << "\n\n";
  os << "[weights]\n"
     << "mode = " << m.weights_mode << "\n"
     << "kappa1 = " << fmt_double(m.kappa1) << "\n"
     << "kappa2 = " << fmt_double(m.kappa2) << "\n"
     << "kappa3 = " << fmt_double(m.kappa3) << "\n"
     << "lambda_fit = " << fmt_double(m.lambda_fit) << "\n"
     << "c_source = " << fmt_double(m.c_source) << "\n"
     << "equivalence_samples = " << m.equivalence_samples << "\n\n";
  os << "[decay]\n"
     << "profile = " << m.profile << "\n"
     << "m = " << detail::join(m.m_values) << "\n"
     << "ell = " << fmt_double(m.ell) << "\n"
     << "k_min = " << fmt_double(m.decay_k_min) << "\n"
     << "k_max = " << fmt_double(m.decay_k_max) << "\n"
     << "k_points = " << m.decay_k_points << "\n"
     << "fit_t1 = " << fmt_double(m.fit_t1) << "\n"
     << "fit_t2 = " << fmt_double(m.fit_t2) << "\n"
     << "fit_points = " << m.fit_points << "\n"
     << "mode_t_end = " << fmt_double(m.mode_t_end) << "\n"
     << "mode_samples = " << m.mode_samples << "\n\n";
  os << "[source]\n"
     << "content = " << m.source_content << "\n"
     << "time = " << m.source_time << "\n"
     << "sigma = " << fmt_double(m.source_sigma) << "\n"
     << "m = " << m.source_m << "\n"
     << "ell = " << fmt_double(m.source_ell) << "\n"
     << "dt = " << fmt_double(m.source_dt) << "\n"
     << "t_end = " << fmt_double(m.source_t_end) << "\n"
     << "record_every = " << m.source_record_every << "\n"
     << "t1 = " << fmt_double(m.source_t1) << "\n"
     << "t2 = " << fmt_double(m.source_t2) << "\n"
     << "k_min = " << fmt_double(m.source_k_min) << "\n"
     << "k_max = " << fmt_double(m.source_k_max) << "\n"
     << "k_points = " << m.source_k_points << "\n\n";
  os << "[seed]\n"
     << "value = " << m.seed << "\n\n";
  os << "[output]\n"
     << "dir = " << m.out_dir << "\n"
     << "csv = " << (m.write_csv ? "true" : "false") << "\n";
  return os.str();
}

inline void validate_manifest(const RunManifest& m) {
  auto fail = [](const std::string& msg) { throw ConfigError("manifest: " + msg); };
  if (m.schema_version != MANIFEST_SCHEMA_VERSION) fail("unsupported schema_version " + std::to_string(m.schema_version));
  if (m.degree_cap < 3) fail("basis.degree_cap must be >= 3");
  if (m.basis_quad_order != 0 && m.basis_quad_order < m.degree_cap + 2) fail("basis.quad_order must be >= degree_cap + 2");
  if (m.collision_quad_order < 0) fail("collision.quad_order must be >= 0");
  if (m.k_points < 1) fail("kgrid.points must be >= 1 (empty frequency grid)");
  if (!(m.k_min > 0.0) || !(m.k_max >= m.k_min)) fail("kgrid needs 0 < k_min <= k_max");
  if (m.k_direction.size() != 3) fail("kgrid.direction needs three components");
  if (m.k_direction[0] == 0.0 && m.k_direction[1] == 0.0 && m.k_direction[2] == 0.0) fail("kgrid.direction is zero");
  if (m.integrator != "exponential" && m.integrator != "split") fail("integrator.method must be exponential or split");
  if (!(m.dt > 0.0) || !(m.t_end > 0.0)) fail("integrator dt and t_end must be positive");
  if (m.random_states < 1) fail("integrator.random_states must be >= 1");
  if (m.weights_mode != "explicit" && m.weights_mode != "calibrate") fail("weights.mode must be explicit or calibrate");
  if (m.kappa1 < 0 || m.kappa2 < 0 || m.kappa3 < 0) fail("weights must be non-negative");
  if (m.equivalence_samples < 100) fail("weights.equivalence_samples must be >= 100");
  if (m.profile != "gaussian" && m.profile != "high_frequency") fail("decay.profile must be gaussian or high_frequency");
  if (m.m_values.empty()) fail("decay.m is empty");
  for (int v : m.m_values)
    if (v < 0) fail("decay.m entries must be >= 0");
  if (m.ell < 0) fail("decay.ell must be >= 0");
  if (!(m.decay_k_min > 0.0) || !(m.decay_k_max > m.decay_k_min) || m.decay_k_points < 3)
    fail("decay frequency grid needs 0 < k_min < k_max and k_points >= 3");
  if (!(m.fit_t1 >= 0.0) || !(m.fit_t2 > m.fit_t1) || m.fit_points < 10) fail("decay fit window needs t1 < t2 and fit_points >= 10");
  if (!(m.mode_t_end > 0.0) || m.mode_samples < 8) fail("decay.mode_t_end must be positive and mode_samples >= 8");
  if (m.source_content != "current" && m.source_content != "density") fail("source.content must be current or density");
  if (m.source_time != "power" && m.source_time != "compact") fail("source.time must be power or compact");
  if (!(m.source_dt > 0.0) || !(m.source_t_end > 0.0) || m.source_record_every < 1) fail("source dt, t_end, record_every must be positive");
  if (!(m.source_k_min > 0.0) || !(m.source_k_max > m.source_k_min) || m.source_k_points < 3) fail("source frequency grid invalid");
}

inline RunManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream cleaned;
  for (std::string line; std::getline(in, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos && line[first] == '#') continue;
    cleaned << line << "\n";
  }
  boost::property_tree::ptree pt;
  try {
    std::istringstream is(cleaned.str());
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("manifest: ") + e.message() + " at line " + std::to_string(e.line()));
  }

  static const std::vector<std::pair<std::string, std::vector<std::string>>> known = {
      {"", {"schema_version"}},
      {"basis", {"degree_cap", "quad_order"}},
      {"collision", {"quad_order", "com_order", "radial_order", "relative_polar", "relative_azimuth", "scatter_polar",
                     "scatter_azimuth", "cache_dir", "coercivity_samples"}},
      {"kgrid", {"k_min", "k_max", "points", "direction"}},
      {"integrator", {"method", "dt", "t_end", "split_tolerance", "random_states"}},
      {"weights", {"mode", "kappa1", "kappa2", "kappa3", "lambda_fit", "c_source", "equivalence_samples"}},
      {"decay", {"profile", "m", "ell", "k_min", "k_max", "k_points", "fit_t1", "fit_t2", "fit_points", "mode_t_end",
                 "mode_samples"}},
      {"source", {"content", "time", "sigma", "m", "ell", "dt", "t_end", "record_every", "t1", "t2", "k_min", "k_max",
                  "k_points"}},
      {"seed", {"value"}},
      {"output", {"dir", "csv"}},
  };
  auto is_known = [&](const std::string& section, const std::string& key) {
    for (const auto& [s, keys] : known)
      if (s == section)
        for (const auto& k : keys)
          if (k == key) return true;
    return false;
  };
  for (const auto& [name, node] : pt) {
    if (node.empty()) {
      if (!is_known("", name)) throw ConfigError("manifest: unknown key '" + name + "'");
      continue;
    }
    bool section_known = false;
    for (const auto& [s, keys] : known) section_known = section_known || (s == name && !s.empty());
    if (!section_known) throw ConfigError("manifest: unknown section [" + name + "]");
    for (const auto& [key, leaf] : node)
      if (!is_known(name, key)) throw ConfigError("manifest: unknown key '" + key + "' in [" + name + "]");
  }

  RunManifest m;
  auto get = [&](const std::string& path, auto& target) {
    using T = std::decay_t<decltype(target)>;
    const auto raw = pt.get_optional<std::string>(path);
    if (!raw) return;
    if constexpr (std::is_same_v<T, std::string>) {
      target = *raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (*raw == "true" || *raw == "1") target = true;
      else if (*raw == "false" || *raw == "0") target = false;
      else throw ConfigError("manifest: " + path + " must be true or false");
    } else {
      std::istringstream is(*raw);
      T v{};
      if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError("manifest: cannot parse " + path + " = '" + *raw + "'");
      target = v;
    }
  };
  get("schema_version", m.schema_version);
  get("basis.degree_cap", m.degree_cap);
  get("basis.quad_order", m.basis_quad_order);
  get("collision.quad_order", m.collision_quad_order);
  if (m.collision_quad_order > 0) m.collision_quadrature = CollisionQuadrature::uniform(m.collision_quad_order);
  get("collision.com_order", m.collision_quadrature.com_order);
  get("collision.radial_order", m.collision_quadrature.radial_order);
  get("collision.relative_polar", m.collision_quadrature.relative_polar);
  get("collision.relative_azimuth", m.collision_quadrature.relative_azimuth);
  get("collision.scatter_polar", m.collision_quadrature.scatter_polar);
  get("collision.scatter_azimuth", m.collision_quadrature.scatter_azimuth);
  get("collision.cache_dir", m.cache_dir);
  get("collision.coercivity_samples", m.coercivity_samples);
  get("kgrid.k_min", m.k_min);
  get("kgrid.k_max", m.k_max);
  get("kgrid.points", m.k_points);
  if (auto d = pt.get_optional<std::string>("kgrid.direction")) m.k_direction = detail::split<double>(*d, "kgrid.direction");
  get("integrator.method", m.integrator);
  get("integrator.dt", m.dt);
  get("integrator.t_end", m.t_end);
  get("integrator.split_tolerance", m.split_tolerance);
  get("integrator.random_states", m.random_states);
  get("weights.mode", m.weights_mode);
  get("weights.kappa1", m.kappa1);
  get("weights.kappa2", m.kappa2);
  get("weights.kappa3", m.kappa3);
  get("weights.lambda_fit", m.lambda_fit);
  get("weights.c_source", m.c_source);
  get("weights.equivalence_samples", m.equivalence_samples);
  get("decay.profile", m.profile);
  if (auto v = pt.get_optional<std::string>("decay.m")) m.m_values = detail::split<int>(*v, "decay.m");
  get("decay.ell", m.ell);
  get("decay.k_min", m.decay_k_min);
  get("decay.k_max", m.decay_k_max);
  get("decay.k_points", m.decay_k_points);
  get("decay.fit_t1", m.fit_t1);
  get("decay.fit_t2", m.fit_t2);
  get("decay.fit_points", m.fit_points);
  get("decay.mode_t_end", m.mode_t_end);
  get("decay.mode_samples", m.mode_samples);
  get("source.content", m.source_content);
  get("source.time", m.source_time);
  get("source.sigma", m.source_sigma);
  get("source.m", m.source_m);
  get("source.ell", m.source_ell);
  get("source.dt", m.source_dt);
  get("source.t_end", m.source_t_end);
  get("source.record_every", m.source_record_every);
  get("source.t1", m.source_t1);
  get("source.t2", m.source_t2);
  get("source.k_min", m.source_k_min);
  get("source.k_max", m.source_k_max);
  get("source.k_points", m.source_k_points);
  get("seed.value", m.seed);
  get("output.dir", m.out_dir);
  get("output.csv", m.write_csv);
  validate_manifest(m);
  return m;
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

inline std::string manifest_hash(const RunManifest& m) { return sha256_hex(render_manifest(m)); }

}  // namespace vmb
