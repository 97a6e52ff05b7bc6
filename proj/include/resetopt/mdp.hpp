#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "resetopt/tensor.hpp"

namespace resetopt {

using Rng = std::mt19937_64;

struct FeatureMap {
  enum class Kind { one_hot, random_features };
  Kind kind = Kind::one_hot;
  std::size_t dim = 0;  // random_features only
  std::uint64_t seed = 0;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// Finite MDP <S, A, R, P, gamma> with an optional fixed start state.
// Terminal states are absorbing and worth zero.
struct MdpSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;  // P[s][a][s']
  std::vector<std::vector<double>> reward;                   // R[s][a]
  double gamma = 0.9;
  std::set<std::size_t> terminal;
  std::optional<std::size_t> start_state;  // uniform over non-terminal states when empty
  FeatureMap features;

  bool is_terminal(std::size_t s) const { return terminal.contains(s); }
  std::size_t feature_dim() const;

  void validate() const;

  friend bool operator==(const MdpSpec&, const MdpSpec&) = default;
};

// Deterministic 4-action grid (0 up, 1 right, 2 down, 3 left); state id is
// y * width + x. Entering the goal pays 1 and ends the episode; every other
// move pays step_penalty. Bumping a wall leaves the agent in place.
MdpSpec make_gridworld(std::size_t width, std::size_t height, std::size_t goal_x, std::size_t goal_y,
                       double step_penalty, std::uint64_t seed, double gamma = 0.9);

// Random MDP: every (s, a) reaches `branching` distinct successors with
// normalized uniform weights; rewards uniform(-1, 1).
MdpSpec make_garnet(std::size_t n_states, std::size_t n_actions, std::size_t branching,
                    std::uint64_t seed, double gamma = 0.9);

struct EnvStep {
  std::size_t next_state;
  double reward;
  bool terminal;
};

EnvStep env_step(const MdpSpec& spec, std::size_t state, std::size_t action, Rng& rng);

std::size_t initial_state(const MdpSpec& spec, Rng& rng);

// Feature vector the Q-network sees for state s.
Tensor state_features(const MdpSpec& spec, std::size_t s);
std::vector<Tensor> feature_table(const MdpSpec& spec);

using QTable = std::vector<std::vector<double>>;  // [s][a]

// One Bellman optimality backup R + gamma * P * max_a' Q, terminal successors worth 0.
QTable bellman_optimality_backup(const MdpSpec& spec, const QTable& q);

// Iterates the backup until the sup-norm change drops below tol.
QTable value_iteration_oracle(const MdpSpec& spec, double tol);

double sup_norm_distance(const QTable& a, const QTable& b);

nlohmann::json mdp_to_json(const MdpSpec& spec);
MdpSpec mdp_from_json(const nlohmann::json& doc);

// Chooses an action for a state; may consume randomness.
using Policy = std::function<std::size_t(std::size_t state, Rng& rng)>;

// Mean undiscounted return over `episodes` rollouts, each starting from
// initial_state and stopping at a terminal state or after `max_steps` steps.
double mean_episode_return(const MdpSpec& spec, const Policy& policy, std::size_t episodes,
                           std::size_t max_steps, Rng& rng);

// Greedy policy read off a fixed per-state action table.
Policy table_policy(std::vector<std::size_t> actions);
Policy uniform_random_policy(std::size_t n_actions);

}  // namespace resetopt
