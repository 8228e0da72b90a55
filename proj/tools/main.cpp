#include <CLI11.hpp>

#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Extended primal-dual reconstruction for spectral CT"};
  cli.require_subcommand(1);

  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string scheme;
  bool check = false;

  for (const char* name : {"simulate", "reconstruct", "verify", "metrics"}) {
    CLI::App* sub = cli.add_subcommand(name);
    sub->add_option("--config", config, "INI run description")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] directory)");
    sub->add_option("--seed", seed, "noise and sampling seed (overrides [noise] seed)");
    sub->add_option("--scheme", scheme, "solver scheme name (overrides [solver] scheme)");
    sub->add_flag("--check", check, "compare regenerated artifacts with manifest.txt instead of updating it");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : epd::app::kConfigError;
  }

  const CLI::App* sub = cli.get_subcommands().front();
  try {
    epd::app::RunConfig cfg = epd::app::load_run_config(config);
    epd::app::Overrides o;
    if (sub->count("--out")) o.out_dir = out_dir;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--scheme")) o.scheme = scheme;
    epd::app::apply_overrides(cfg, o);
    return epd::app::execute(sub->get_name(), cfg, check);
  } catch (const std::exception& e) {
    return epd::app::report_failure(e);
  }
}
