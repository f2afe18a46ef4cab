#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dan/training.hpp"

namespace dan {

/// Training-run description parsed from a flat key=value file ('#' comments,
/// blank lines allowed; unknown keys rejected). All hyperparameters default
/// as in TrainConfig; paths default to empty.
struct RunConfig {
  std::string data_dir;
  std::string bbox_manifest;
  std::string model_out;
  std::string log_dir;
  bool strict_load = false;
  TrainConfig train;

  void validate() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical echo of every setting, defaults included. Parsing the echo
/// yields back the same configuration.
std::string serialize_run_config(const RunConfig& config);

}  // namespace dan
