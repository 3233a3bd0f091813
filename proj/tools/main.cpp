#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Incident-duration experiment runner"};
  app.set_version_flag("--version", ieo::cli::version());
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  for (const auto& name : ieo::cli::kCommands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: config output_dir, else out/<command>)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "parallel workers; results do not depend on it")
        ->check(CLI::Range(1, 1024));
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  ieo::cli::ExperimentConfig config;
  try {
    config = ieo::cli::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (out_dir.empty()) out_dir = config.output_dir.value_or("out/" + command);

  try {
    const auto manifest = ieo::cli::run(config, {command, out_dir, seed, workers});
    for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& e : manifest.errors) std::cerr << "error: " << e << '\n';
    std::cout << command << ": " << manifest.files.size() << " files in " << out_dir << " ("
              << (manifest.ok() ? "ok" : "failed") << ")\n";
    return manifest.ok() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
