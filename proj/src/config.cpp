#include "resetopt/config.hpp"

#include <charconv>
#include <fstream>
#include <thread>

namespace resetopt {

namespace fs = std::filesystem;

nlohmann::json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (node->is_array()) {
      // Numeric components index into existing list entries.
      std::size_t index = 0;
      const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), index);
      if (ec != std::errc{} || end != part.data() + part.size() || index >= node->size()) {
        throw ConfigError("override key '" + key + "': '" + part + "' is not a valid list index");
      }
      node = &(*node)[index];
      if (dot == std::string::npos) break;
      start = dot + 1;
      continue;
    }
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = nlohmann::json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

namespace {

FeatureMap features_from_json(const nlohmann::json& doc, std::uint64_t default_seed) {
  FeatureMap f;
  f.seed = default_seed;
  if (doc.is_null()) return f;
  const auto kind = doc.value("kind", std::string("one_hot"));
  if (kind == "one_hot") {
    f.kind = FeatureMap::Kind::one_hot;
  } else if (kind == "random_features") {
    f.kind = FeatureMap::Kind::random_features;
    f.dim = doc.at("dim").get<std::size_t>();
  } else {
    throw ConfigError("unknown feature map '" + kind + "'");
  }
  f.seed = doc.value("seed", default_seed);
  return f;
}

}  // namespace

EnvEntry env_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  try {
    const auto type = doc.value("type", std::string("gridworld"));
    const double gamma = doc.value("gamma", 0.9);
    const auto seed = doc.value("seed", std::uint64_t{0});
    EnvEntry env;
    if (type == "gridworld") {
      const auto width = doc.value("width", std::size_t{4});
      const auto height = doc.value("height", std::size_t{4});
      const auto goal = doc.value("goal", std::vector<std::size_t>{width - 1, height - 1});
      if (goal.size() != 2) throw ConfigError("gridworld goal must be [x, y]");
      env.spec = make_gridworld(width, height, goal[0], goal[1], doc.value("step_penalty", -0.01), seed, gamma);
      env.name = doc.value("name", "grid" + std::to_string(width) + "x" + std::to_string(height));
    } else if (type == "garnet") {
      env.spec = make_garnet(doc.value("n_states", std::size_t{20}), doc.value("n_actions", std::size_t{4}),
                             doc.value("branching", std::size_t{3}), seed, gamma);
      env.name = doc.value("name", "garnet-" + std::to_string(seed));
    } else if (type == "mdp") {
      if (doc.contains("path")) {
        fs::path p = doc.at("path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        env.spec = mdp_from_json(load_config_file(p));
      } else {
        env.spec = mdp_from_json(doc.at("mdp"));
      }
      env.name = doc.value("name", std::string("mdp"));
      return env;
    } else {
      throw ConfigError("unknown environment type '" + type + "'");
    }
    env.spec.features = features_from_json(doc.value("features", nlohmann::json()), seed);
    env.spec.validate();
    return env;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid environment: ") + e.what());
  }
}

std::vector<EnvEntry> envs_from_json(const nlohmann::json& list, const fs::path& base_dir) {
  if (!list.is_array()) throw ConfigError("'envs' must be a list");
  std::vector<EnvEntry> out;
  for (const auto& item : list) {
    if (item.value("type", std::string()) == "garnet_suite") {
      const auto count = item.value("count", std::size_t{5});
      const auto base_seed = item.value("base_seed", std::uint64_t{0});
      for (std::size_t j = 0; j < count; ++j) {
        auto garnet = item;
        garnet["type"] = "garnet";
        garnet["seed"] = base_seed + j;
        garnet.erase("name");
        out.push_back(env_from_json(garnet, base_dir));
      }
    } else {
      out.push_back(env_from_json(item, base_dir));
    }
  }
  return out;
}

TrainConfig train_config_for(const nlohmann::json& root, const MdpSpec& spec) {
  try {
    TrainConfig cfg = train_config_from_json(root);
    cfg.gamma = spec.gamma;
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
}

SweepConfig sweep_config_from_json(const nlohmann::json& root, const fs::path& base_dir) {
  try {
    SweepConfig cfg;
    cfg.base = train_config_from_json(root);
    cfg.envs = envs_from_json(root.value("envs", nlohmann::json::array()), base_dir);
    if (root.contains("optimizers")) {
      for (const auto& o : root.at("optimizers")) {
        auto probe = root;
        probe["optimizer"] = o;
        cfg.optimizers.push_back(train_config_from_json(probe).optimizer);
      }
    } else {
      cfg.optimizers.push_back(cfg.base.optimizer);
    }
    for (const auto& p : root.value("policies", std::vector<std::string>{})) {
      cfg.policies.push_back(reset_kind_from_string(p));
    }
    cfg.K_values = root.value("K_values", std::vector<std::size_t>{});
    cfg.budget = root.value("budget", std::size_t{0});
    cfg.seeds = root.value("seeds", std::vector<std::uint64_t>{});
    cfg.anchor_episodes = root.value("anchor_episodes", cfg.anchor_episodes);
    cfg.anchor_seed = root.value("anchor_seed", cfg.anchor_seed);
    cfg.auc_normalized = root.value("auc_normalized", cfg.auc_normalized);
    const auto workers = root.value("workers", std::size_t{0});
    cfg.workers = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
    for (const auto& p : root.value("poison", nlohmann::json::array())) {
      PoisonRule rule;
      if (p.contains("env")) rule.env = p.at("env").get<std::string>();
      if (p.contains("optimizer")) rule.optimizer = p.at("optimizer").get<std::string>();
      if (p.contains("policy")) rule.policy = p.at("policy").get<std::string>();
      if (p.contains("K")) rule.K = p.at("K").get<std::size_t>();
      if (p.contains("seed")) rule.seed = p.at("seed").get<std::uint64_t>();
      rule.step = p.value("step", std::uint64_t{0});
      cfg.poison.push_back(rule);
    }
    cfg.validate();
    for (const auto& env : cfg.envs) {
      auto probe = cfg.base;
      probe.gamma = env.spec.gamma;
      probe.validate();
    }
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid sweep config: ") + e.what());
  }
}

}  // namespace resetopt
