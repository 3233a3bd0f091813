#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace ieo::cli {

inline const std::vector<std::string> kCommands{"profile", "synth",   "sweep",  "multiclass", "ldo-sweep",
                                                "scenarios", "ieo", "fusion", "importance", "timing"};

struct RunOptions {
  std::string command;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  ///< overrides the config seed
  int workers = 1;
};

struct RunManifest {
  std::string command;
  std::string config_hash;  ///< FNV-1a 64 of the canonical config dump, hex
  std::string version;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::pair<std::string, double>> stages;  ///< name, wall-clock seconds
  std::vector<std::string> files;                       ///< relative to the output directory, sorted
  std::vector<std::string> warnings;
  std::vector<std::string> errors;

  bool ok() const noexcept { return errors.empty(); }
};

nlohmann::json to_json(const RunManifest& manifest);

std::string version();
std::string fnv1a_hex(const std::string& text);

/// Runs one subcommand and writes its artifacts plus manifest.json into
/// options.out_dir. Recoverable problems become warnings. Failures, including
/// empty-subset refusals, are recorded as errors and the manifest is still
/// written. Throws only for a bad command/worker count or when the manifest
/// itself cannot be written.
RunManifest run(const ExperimentConfig& config, const RunOptions& options);

}  // namespace ieo::cli
