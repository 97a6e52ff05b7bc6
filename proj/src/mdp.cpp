#include "resetopt/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace resetopt {

std::size_t MdpSpec::feature_dim() const {
  return features.kind == FeatureMap::Kind::one_hot ? n_states : features.dim;
}

void MdpSpec::validate() const {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("MDP needs at least one state and one action");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("MDP discount must lie in [0,1)");
  if (transition.size() != n_states || reward.size() != n_states) {
    throw std::invalid_argument("MDP tables must have one row per state");
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    if (transition[s].size() != n_actions || reward[s].size() != n_actions) {
      throw std::invalid_argument("MDP tables must have one entry per action");
    }
    for (std::size_t a = 0; a < n_actions; ++a) {
      const auto& row = transition[s][a];
      if (row.size() != n_states) throw std::invalid_argument("transition rows must span all states");
      double total = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw std::invalid_argument("transition probabilities must be nonnegative");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("P[" + std::to_string(s) + "][" + std::to_string(a) +
                                    "] does not sum to 1");
      }
      if (!std::isfinite(reward[s][a])) throw std::invalid_argument("rewards must be finite");
    }
  }
  for (auto t : terminal) {
    if (t >= n_states) throw std::invalid_argument("terminal state id out of range");
  }
  if (start_state && (*start_state >= n_states || is_terminal(*start_state))) {
    throw std::invalid_argument("start state must be a valid non-terminal state");
  }
  if (terminal.size() == n_states) throw std::invalid_argument("MDP needs a non-terminal state");
  if (features.kind == FeatureMap::Kind::random_features && features.dim == 0) {
    throw std::invalid_argument("random feature map needs a positive dimension");
  }
}

MdpSpec make_gridworld(std::size_t width, std::size_t height, std::size_t goal_x, std::size_t goal_y,
                       double step_penalty, std::uint64_t seed, double gamma) {
  if (width == 0 || height == 0) throw std::invalid_argument("gridworld extents must be positive");
  if (width * height < 2) throw std::invalid_argument("gridworld of a single cell is degenerate");
  if (goal_x >= width || goal_y >= height) throw std::invalid_argument("gridworld goal lies outside the grid");

  MdpSpec spec;
  spec.n_states = width * height;
  spec.n_actions = 4;
  spec.gamma = gamma;
  spec.features.seed = seed;
  const std::size_t goal = goal_y * width + goal_x;
  spec.terminal = {goal};
  spec.start_state = goal == 0 ? spec.n_states - 1 : 0;
  spec.transition.assign(spec.n_states, std::vector<std::vector<double>>(4, std::vector<double>(spec.n_states, 0.0)));
  spec.reward.assign(spec.n_states, std::vector<double>(4, 0.0));

  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t s = y * width + x;
      for (std::size_t a = 0; a < 4; ++a) {
        if (s == goal) {
          spec.transition[s][a][s] = 1.0;
          continue;
        }
        std::size_t nx = x, ny = y;
        switch (a) {
          case 0: if (y > 0) --ny; break;
          case 1: if (x + 1 < width) ++nx; break;
          case 2: if (y + 1 < height) ++ny; break;
          case 3: if (x > 0) --nx; break;
        }
        const std::size_t next = ny * width + nx;
        spec.transition[s][a][next] = 1.0;
        spec.reward[s][a] = next == goal ? 1.0 : step_penalty;
      }
    }
  }
  spec.validate();
  return spec;
}

MdpSpec make_garnet(std::size_t n_states, std::size_t n_actions, std::size_t branching,
                    std::uint64_t seed, double gamma) {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("garnet needs states and actions");
  if (branching == 0 || branching > n_states) {
    throw std::invalid_argument("garnet branching must lie in [1, n_states]");
  }
  MdpSpec spec;
  spec.n_states = n_states;
  spec.n_actions = n_actions;
  spec.gamma = gamma;
  spec.features.seed = seed;
  spec.transition.assign(n_states, std::vector<std::vector<double>>(n_actions, std::vector<double>(n_states, 0.0)));
  spec.reward.assign(n_states, std::vector<double>(n_actions, 0.0));

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  std::vector<std::size_t> ids(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      std::iota(ids.begin(), ids.end(), std::size_t{0});
      std::shuffle(ids.begin(), ids.end(), rng);
      std::vector<double> weights(branching);
      for (auto& w : weights) w = unit(rng) + 1e-3;
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      auto& row = spec.transition[s][a];
      for (std::size_t b = 0; b < branching; ++b) row[ids[b]] = weights[b] / total;
      // Fold the rounding residue into the largest entry so the row sums to 1.
      const double residue = 1.0 - std::accumulate(row.begin(), row.end(), 0.0);
      *std::max_element(row.begin(), row.end()) += residue;
      spec.reward[s][a] = reward(rng);
    }
  }
  spec.validate();
  return spec;
}

EnvStep env_step(const MdpSpec& spec, std::size_t state, std::size_t action, Rng& rng) {
  if (state >= spec.n_states || action >= spec.n_actions) {
    throw std::out_of_range("env_step: state or action id out of range");
  }
  if (spec.is_terminal(state)) return {state, 0.0, true};
  const auto& row = spec.transition[state][action];
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  std::size_t next = spec.n_states;
  std::size_t last_positive = 0;
  for (std::size_t sp = 0; sp < row.size(); ++sp) {
    if (row[sp] <= 0.0) continue;
    last_positive = sp;
    cumulative += row[sp];
    if (u < cumulative) {
      next = sp;
      break;
    }
  }
  if (next == spec.n_states) next = last_positive;
  return {next, spec.reward[state][action], spec.is_terminal(next)};
}

std::size_t initial_state(const MdpSpec& spec, Rng& rng) {
  if (spec.start_state) return *spec.start_state;
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    if (!spec.is_terminal(s)) candidates.push_back(s);
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

std::vector<Tensor> feature_table(const MdpSpec& spec) {
  std::vector<Tensor> table;
  table.reserve(spec.n_states);
  if (spec.features.kind == FeatureMap::Kind::one_hot) {
    for (std::size_t s = 0; s < spec.n_states; ++s) {
      Tensor t = Tensor::zeros({spec.n_states});
      t[s] = 1.0;
      table.push_back(std::move(t));
    }
    return table;
  }
  Rng rng(spec.features.seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.features.dim)));
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    std::vector<double> row(spec.features.dim);
    for (auto& x : row) x = normal(rng);
    table.push_back(Tensor::vector(std::move(row)));
  }
  return table;
}

Tensor state_features(const MdpSpec& spec, std::size_t s) {
  if (s >= spec.n_states) throw std::out_of_range("state id out of range");
  if (spec.features.kind == FeatureMap::Kind::one_hot) {
    Tensor t = Tensor::zeros({spec.n_states});
    t[s] = 1.0;
    return t;
  }
  return feature_table(spec)[s];
}

QTable bellman_optimality_backup(const MdpSpec& spec, const QTable& q) {
  std::vector<double> value(spec.n_states, 0.0);
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    if (!spec.is_terminal(s)) value[s] = *std::max_element(q[s].begin(), q[s].end());
  }
  QTable out(spec.n_states, std::vector<double>(spec.n_actions, 0.0));
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    if (spec.is_terminal(s)) continue;
    for (std::size_t a = 0; a < spec.n_actions; ++a) {
      double expected = 0.0;
      const auto& row = spec.transition[s][a];
      for (std::size_t sp = 0; sp < spec.n_states; ++sp) expected += row[sp] * value[sp];
      out[s][a] = spec.reward[s][a] + spec.gamma * expected;
    }
  }
  return out;
}

double sup_norm_distance(const QTable& a, const QTable& b) {
  if (a.size() != b.size()) throw DimensionError("q-tables differ in state count");
  double d = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s].size() != b[s].size()) throw DimensionError("q-tables differ in action count");
    for (std::size_t k = 0; k < a[s].size(); ++k) d = std::max(d, std::abs(a[s][k] - b[s][k]));
  }
  return d;
}

QTable value_iteration_oracle(const MdpSpec& spec, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value iteration tolerance must be positive");
  spec.validate();
  QTable q(spec.n_states, std::vector<double>(spec.n_actions, 0.0));
  // A gamma-contraction; the cap only guards tolerances below rounding noise.
  for (int iter = 0; iter < 1'000'000; ++iter) {
    QTable next = bellman_optimality_backup(spec, q);
    const double change = sup_norm_distance(next, q);
    q = std::move(next);
    if (change < tol) break;
  }
  return q;
}

nlohmann::json mdp_to_json(const MdpSpec& spec) {
  nlohmann::json features;
  if (spec.features.kind == FeatureMap::Kind::one_hot) {
    features = {{"kind", "one_hot"}, {"seed", spec.features.seed}};
  } else {
    features = {{"kind", "random_features"}, {"dim", spec.features.dim}, {"seed", spec.features.seed}};
  }
  return {
      {"n_states", spec.n_states},
      {"n_actions", spec.n_actions},
      {"gamma", spec.gamma},
      {"transition", spec.transition},
      {"reward", spec.reward},
      {"terminal", std::vector<std::size_t>(spec.terminal.begin(), spec.terminal.end())},
      {"start_state", spec.start_state ? nlohmann::json(*spec.start_state) : nlohmann::json(nullptr)},
      {"features", features},
  };
}

MdpSpec mdp_from_json(const nlohmann::json& doc) {
  MdpSpec spec;
  spec.n_states = doc.at("n_states").get<std::size_t>();
  spec.n_actions = doc.at("n_actions").get<std::size_t>();
  spec.gamma = doc.at("gamma").get<double>();
  spec.transition = doc.at("transition").get<decltype(spec.transition)>();
  spec.reward = doc.at("reward").get<decltype(spec.reward)>();
  for (auto t : doc.value("terminal", std::vector<std::size_t>{})) spec.terminal.insert(t);
  if (doc.contains("start_state") && !doc.at("start_state").is_null()) {
    spec.start_state = doc.at("start_state").get<std::size_t>();
  }
  if (doc.contains("features")) {
    const auto& f = doc.at("features");
    const auto kind = f.value("kind", std::string("one_hot"));
    if (kind == "one_hot") {
      spec.features.kind = FeatureMap::Kind::one_hot;
    } else if (kind == "random_features") {
      spec.features.kind = FeatureMap::Kind::random_features;
      spec.features.dim = f.at("dim").get<std::size_t>();
    } else {
      throw std::invalid_argument("unknown feature map '" + kind + "'");
    }
    spec.features.seed = f.value("seed", std::uint64_t{0});
  }
  spec.validate();
  return spec;
}

double mean_episode_return(const MdpSpec& spec, const Policy& policy, std::size_t episodes,
                           std::size_t max_steps, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("need at least one evaluation episode");
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::size_t s = initial_state(spec, rng);
    double ret = 0.0;
    for (std::size_t step = 0; step < max_steps; ++step) {
      const auto out = env_step(spec, s, policy(s, rng), rng);
      ret += out.reward;
      s = out.next_state;
      if (out.terminal) break;
    }
    total += ret;
  }
  return total / static_cast<double>(episodes);
}

Policy table_policy(std::vector<std::size_t> actions) {
  return [actions = std::move(actions)](std::size_t s, Rng&) { return actions.at(s); };
}

Policy uniform_random_policy(std::size_t n_actions) {
  return [n_actions](std::size_t, Rng& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n_actions - 1)(rng);
  };
}

}  // namespace resetopt
