#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace resetopt::cli {

// Stable exit-status contract.
enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kUsageError = 2,
  kPartialSweep = 3,
  kDegenerateEnv = 4,
};

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;  // --set KEY=VALUE
  std::optional<std::size_t> workers;
  std::optional<std::string> results_dir;
  bool quiet = false;
};

int cmd_train(const Options& opts, std::ostream& out, std::ostream& log);
int cmd_sweep(const Options& opts, std::ostream& out, std::ostream& log);
int cmd_oracle(const Options& opts, std::ostream& out, std::ostream& log);
int cmd_report(const std::string& results_dir, std::ostream& out, std::ostream& log);

int run(int argc, char** argv);

}  // namespace resetopt::cli
