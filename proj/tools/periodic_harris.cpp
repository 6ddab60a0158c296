// periodic-harris <command> --config <file> [--set key=value]...
//
// Exit codes: 0 success, 1 criterion failure, 2 config error, 3 runtime error.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "periodic_harris/commands.hpp"

namespace ph = periodic_harris;

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification toolkit for periodically forced stochastic Hodgkin-Huxley models"};
  app.set_version_flag("--version", std::string(ph::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  for (const auto& [name, fn] : ph::commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "TOML configuration file")->required();
    sub->add_option("--set", overrides, "override a configuration key, e.g. sim.dt=0.005")->take_all();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const ph::RunConfig cfg = ph::load_config(config_path, overrides);
    auto [outcome, dir] = ph::run_command(command, cfg, std::cout);
    std::cout << "run directory: " << dir.string() << '\n'
              << "config hash " << ph::config_hash(cfg) << ", seed " << cfg.sim.seed << '\n'
              << (outcome.passed ? "PASS" : "FAIL") << '\n';
    return outcome.passed ? 0 : 1;
  } catch (const ph::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ph::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
