#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "opdyn/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"opdyn: learn Heisenberg-picture Pauli dynamics and extract spectra"};
  app.require_subcommand(1);
  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::vector<std::string> overrides;

  const char* commands[][2] = {
      {"generate", "exact coefficient trajectory"},
      {"noise", "apply depolarizing decay and Gaussian noise"},
      {"train", "train a Neural ODE vector field"},
      {"predict", "extrapolate from h(t0) with a checkpoint"},
      {"spectrum", "two-point function spectrum and peaks"},
      {"compare", "train several variants and tabulate drift"},
      {"validate", "run oracle and invariant checks"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "config file of section.key = value lines");
    sub->add_option("--in", in_path, "input file");
    sub->add_option("--out", out_path, "output path");
    sub->add_option("overrides", overrides, "key=value overrides applied after the config file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  opdyn::cli::CommandArgs args;
  try {
    if (!config_path.empty()) args.config = opdyn::cli::RunConfig::load(config_path);
    for (const auto& o : overrides) args.config.set_override(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (!in_path.empty()) args.in = in_path;
  if (!out_path.empty()) args.out = out_path;
  return opdyn::cli::run_command(app.get_subcommands().front()->get_name(), args, std::cerr);
}
