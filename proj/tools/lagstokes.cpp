#include <CLI11.hpp>

#include <iostream>

#include "lagstokes/config.hpp"
#include "lagstokes/runner.hpp"

int main(int argc, char** argv) {
  using namespace lagstokes;
  CLI::App app{"Two-phase Lagrangian Stokes solver"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool verbose = false;
  for (const auto& name : subcommand_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "random seed");
    sub->add_flag("--verbose", verbose, "progress on stderr");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommand(name);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config(config_path);
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (sub->count("--seed")) cfg.seed = seed;
    cfg.verbose = cfg.verbose || verbose;
    run_subcommand(cfg, name, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error kind=" << error_kind_name(e.kind()) << " message=" << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=" << e.what() << '\n';
    return 2;
  }
  return 0;
}
