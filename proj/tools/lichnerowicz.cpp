// Command-line driver: one mode per subcommand, plus manifest verification.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lichnerowicz/harness/run.hpp"

namespace h = lich::harness;

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for the Einstein-Lichnerowicz equation on flat tori"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool verbose = false;
  for (const auto& [mode, name] : h::mode_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "YAML run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
    sub->add_flag("--verbose", verbose, "progress on stderr");
  }
  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "check a run directory against its manifest");
  verify->add_option("dir", verify_dir, "run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : h::kExitConfig;
  }

  auto* chosen = app.get_subcommands().front();
  if (chosen == verify) {
    try {
      const auto problems = h::verify_manifest(verify_dir);
      for (const auto& p : problems) std::cerr << "verify: " << p << "\n";
      if (problems.empty()) std::cout << "verify: ok\n";
      return problems.empty() ? 0 : 1;
    } catch (const std::exception& e) {
      std::cerr << "verify: " << e.what() << "\n";
      return h::kExitIo;
    }
  }

  try {
    std::string text;
    try {
      text = h::read_file(config_path);
    } catch (const h::IoError& e) {
      throw h::ConfigError("", e.what());
    }
    auto cfg = h::parse_config(text);
    const auto mode = h::parse_mode(chosen->get_name());
    if (cfg.mode && *cfg.mode != *mode)
      throw h::ConfigError("mode", "config says '" + h::to_string(*cfg.mode) + "' but the command is '" +
                                       chosen->get_name() + "'");
    cfg.mode = mode;
    h::RunOptions opt;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    if (chosen->count("--seed")) opt.seed = seed;
    opt.verbose = verbose;
    const auto outcome = h::run(cfg, opt);
    if (outcome.exit_code == h::kExitSolver)
      std::cerr << "solver failure: " << outcome.report.value("error", "") << "\n";
    std::cout << (outcome.directory / (outcome.exit_code == h::kExitSolver ? "report.json.partial" : "report.json"))
                     .string()
              << "\n";
    return outcome.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::exit_code_for(e);
  }
}
