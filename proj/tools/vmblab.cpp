// vmblab: command-line front end for the linearized VMB verification lab.

#include "vmb/app.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

struct Flags {
  std::string manifest;
  std::string out;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw vmb::ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

int run(const std::string& command, const Flags& f) {
  vmb::RunManifest m;
  try {
    m = vmb::load_manifest(f.manifest);
    if (!f.out.empty()) m.out_dir = f.out;
    if (f.seed_set) m.seed = f.seed;
    vmb::validate_manifest(m);
  } catch (const std::exception& e) {
    std::cerr << "vmblab: " << e.what() << "\n";
    return vmb::exit_config_error;
  }

  vmb::CommandOutput out;
  try {
    if (command == "verify-collision") out = vmb::cmd_verify_collision(m, f.threads);
    else if (command == "verify-lyapunov") out = vmb::cmd_verify_lyapunov(m, f.threads);
    else if (command == "sweep-decay") out = vmb::cmd_sweep_decay(m, f.threads);
    else out = vmb::cmd_duhamel(m, f.threads);
  } catch (const std::invalid_argument& e) {
    std::cerr << "vmblab: " << e.what() << "\n";
    return vmb::exit_config_error;
  } catch (const std::exception& e) {
    std::cerr << "vmblab: " << e.what() << "\n";
    return vmb::exit_check_failed;
  }

  const std::filesystem::path dir(m.out_dir);
  try {
    write_file(dir / (command + ".json"), out.report.dump(2) + "\n");
    for (const auto& [name, text] : out.csv_files) write_file(dir / name, text);
  } catch (const std::exception& e) {
    std::cerr << "vmblab: " << e.what() << "\n";
    return vmb::exit_config_error;
  }
  for (const auto& msg : out.messages) std::cerr << "vmblab: " << msg << "\n";
  std::cout << command << ": " << (out.exit_code == 0 ? "PASS" : "FAIL") << " (report " << (dir / (command + ".json")).string()
            << ")\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearized Vlasov-Maxwell-Boltzmann verification lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--manifest", f.manifest, "Run manifest (INI)")->envname("VMBLAB_MANIFEST")->required();
  app.add_option("--out", f.out, "Output directory (overrides [output] dir)")->envname("VMBLAB_OUT");
  app.add_option("--threads", f.threads, "Worker threads (0 = all cores)")->envname("VMBLAB_THREADS");
  auto* seed = app.add_option("--seed", f.seed, "Random seed (overrides [seed] value)")->envname("VMBLAB_SEED");

  std::string command;
  const std::pair<const char*, const char*> subcommands[] = {
      {"verify-collision", "Assemble the collision matrix and check symmetry, kernel and coercivity"},
      {"verify-lyapunov", "Check norm equivalence and the dissipation inequality over the k grid"},
      {"sweep-decay", "Integrate the k grid and fit L2 decay exponents"},
      {"duhamel", "Sourced run with superposition check"}};
  for (const auto& [name, help] : subcommands) {
    app.add_subcommand(name, help)->callback([&command, name = std::string(name)] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vmb::exit_config_error;
  }
  f.seed_set = seed->count() > 0;
  return run(command, f);
}
