#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resmotion/cli/config.hpp"

namespace resmotion::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

// Written as <out_dir>/run_manifest.json by every command.
struct RunManifest {
  std::string command;
  std::string config_ini;  // fully resolved config
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;  // hashed when written
  double wall_clock_seconds = 0.0;

  void write(const fs::path& out_dir) const;
};

struct CommonOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool deterministic = false;
  std::optional<int> threads;

  // Loads --config (or defaults) and applies --seed / --deterministic.
  RunConfig resolve() const;
};

int cmd_synth(const CommonOptions& opt);
int cmd_pack(const CommonOptions& opt, const fs::path& dataset);
int cmd_train(const CommonOptions& opt, const fs::path& dataset, const std::optional<fs::path>& resume);
int cmd_eval(const CommonOptions& opt, const fs::path& params, const fs::path& dataset,
             std::optional<std::size_t> num_clips, const std::string& split);
int cmd_fuse(const CommonOptions& opt, const fs::path& pred_a, const fs::path& pred_b,
             const fs::path& dataset, const std::string& split);
int cmd_correlate(const CommonOptions& opt, const fs::path& report_a, const fs::path& report_b,
                  const std::optional<fs::path>& classes);
int cmd_ablate(const CommonOptions& opt, const fs::path& dataset);

// Parses argv, dispatches, and maps exceptions to exit codes:
// ConfigError 2, DataError 3, NumericError 4, anything else 1.
int run(int argc, char** argv);

}  // namespace resmotion::cli
