// topocov: run one experiment from an INI config and write its outputs.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "topocov/config.hpp"
#include "topocov/runner.hpp"

namespace {

struct Flags {
  std::string config;
  std::string seed;
  int workers = 0;
  std::string out;
};

int run(const std::string& experiment, const Flags& f) {
  using namespace topocov;
  RunConfig cfg = f.config.empty() ? default_config(experiment) : load_config(experiment, f.config);
  if (!f.seed.empty()) set_config_value(cfg, "run.seed", f.seed);
  if (f.workers != 0) set_config_value(cfg, "run.workers", std::to_string(f.workers));
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.require_seed();

  RunResult result = run_experiment(cfg);
  for (const auto& path : emit_outputs(result, cfg)) std::cout << "wrote " << path << "\n";
  std::cout << result.header << "\n";
  for (const auto& row : result.rows) std::cout << row << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topocov: topological events of planar Gaussian fields"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const auto& name : topocov::experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", flags.config, "INI config file");
    sub->add_option("--seed", flags.seed, "master seed (overrides run.seed)");
    sub->add_option("--workers", flags.workers, "worker threads (results do not depend on it)");
    sub->add_option("--out", flags.out, "output directory");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : topocov::exit_code(topocov::ErrorKind::Validation);
  }
  try {
    return run(chosen, flags);
  } catch (const topocov::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return topocov::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
