#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resetopt/harness.hpp"
#include "resetopt/training.hpp"

namespace resetopt {

// Unreadable or invalid configuration (CLI exit status 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json load_config_file(const std::filesystem::path& path);

// "a.b.c=value": value is parsed as JSON when it parses, else kept as a string.
// Numeric components index into lists ("envs.0.gamma=0.99").
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Environment entry:
//   {"name": ..., "type": "gridworld", "width", "height", "goal": [x, y], "step_penalty", "seed", "gamma"}
//   {"name": ..., "type": "garnet", "n_states", "n_actions", "branching", "seed", "gamma"}
//   {"name": ..., "type": "mdp", "mdp": {...}} or {"type": "mdp", "path": "file.json"}
// plus an optional "features": {"kind": "one_hot" | "random_features", "dim", "seed"}.
EnvEntry env_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

// "envs" list; a {"type": "garnet_suite", "count": N, "base_seed": s, ...}
// entry expands to N garnets named garnet-<seed>.
std::vector<EnvEntry> envs_from_json(const nlohmann::json& list, const std::filesystem::path& base_dir = {});

// The run's gamma is the environment's discount.
TrainConfig train_config_for(const nlohmann::json& root, const MdpSpec& spec);

SweepConfig sweep_config_from_json(const nlohmann::json& root, const std::filesystem::path& base_dir = {});

}  // namespace resetopt
