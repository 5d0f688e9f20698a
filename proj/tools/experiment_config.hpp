#pragma once
// Experiment configuration for the command-line driver. Only the C API header
// is used here so the driver stays on the shared-library boundary.

#include "covdl/covdl.h"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace covdl_cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SyntheticScenario {
  std::string preset;  // "scenario1".."scenario3", empty when fully custom
  covdl_scenario params{};
};

struct ExternalData {
  std::string recording;  // M x N_d matrix, .cvdl or .csv
  double sample_rate = 0.0;
  int64_t sources = 0;
  std::string a_true;  // optional reference mixing matrix for eval
};

struct ExperimentConfig {
  std::optional<SyntheticScenario> scenario;
  std::optional<ExternalData> external;
  covdl_segmentation segmentation{};
  covdl_learn_options learn{};  // sources and seeds are filled in at run time
  double threshold = 0.99;
  std::string output_dir = "covdl_out";
  uint64_t seed = 0;
  int32_t threads = 0;

  ExperimentConfig();

  int64_t sources() const;
  double sample_rate() const;
  // Structural checks; with check_paths set, external files must exist.
  void validate(bool check_paths = true) const;
  // Learn options with sources and seeds resolved.
  covdl_learn_options resolved_learn() const;
  covdl_scenario resolved_scenario() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Config for a named preset: scenario plus the analysis settings matching it.
ExperimentConfig preset_config(const std::string& name);

}  // namespace covdl_cli
