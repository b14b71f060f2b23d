#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "elastowave/scenario.hpp"

namespace ew = elastowave;

int main(int argc, char** argv) {
  CLI::App app{"Elastodynamic simulator with acoustic boundary conditions"};
  app.require_subcommand(1);

  ew::RunOptions opt;
  app.add_flag("--deterministic", opt.deterministic,
               "sequential reductions, byte-stable outputs");

  std::string config_path;
  int levels = 2;

  auto add_sub = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("config", config_path, "scenario config (JSON)")->required();
    sub->add_flag("--deterministic", opt.deterministic,
                  "sequential reductions, byte-stable outputs");
    return sub;
  };

  CLI::App* simulate = add_sub("simulate", "integrate and write traces and summary");
  CLI::App* resolvent =
      add_sub("resolvent-check", "random right-hand-side solvability check");
  CLI::App* spectrum = add_sub("spectrum", "estimate the spectral abscissa");
  CLI::App* audit = add_sub("audit", "evaluate the multiplier identities");
  CLI::App* converge = add_sub("converge", "run a mesh refinement study");
  converge->add_option("--levels", levels, "number of refinement levels")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const ew::ScenarioConfig cfg = ew::load_config(config_path);
    if (simulate->parsed()) ew::run_simulate(cfg, opt);
    if (resolvent->parsed()) ew::run_resolvent_check(cfg, opt);
    if (spectrum->parsed()) ew::run_spectrum(cfg, opt);
    if (audit->parsed()) ew::run_audit(cfg, opt);
    if (converge->parsed()) ew::run_converge(cfg, levels, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ew::exit_code_for(e);
  }
  return 0;
}
