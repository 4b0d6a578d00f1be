#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "gsm/types.hpp"

namespace gsm {

// Shared CLI settings. Extents of 0 mean "use the command's default".
// Command-line flags beat the GSMAMBA_OUT_DIR environment variable, which
// beats the config file, which beats built-in defaults.
struct RunConfig {
  std::uint64_t seed = 42;
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  Index radius = 1;
  Index heads = 1;
  bool rel_bias = true;  // config-file only switch
  std::string variant = "tiny";
  double tolerance = 0.0;  // 0 means per-check defaults
  std::string out_dir;
  std::string config_path;
};

// Overwrites fields that appear in the JSON file and are not named in fixed
// (keys already settled by a command-line flag or the environment).
void apply_config_file(RunConfig& cfg, const std::string& path,
                       const std::set<std::string>& fixed);

std::string resolve_out_dir(const RunConfig& cfg);  // empty means "."

}  // namespace gsm
