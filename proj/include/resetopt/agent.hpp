#pragma once

#include <span>

#include "resetopt/mdp.hpp"
#include "resetopt/mlp.hpp"
#include "resetopt/transition.hpp"

namespace resetopt {

// theta: target parameters, frozen within an iteration. w: online parameters.
struct AgentParams {
  FlatParams theta;
  FlatParams w;

  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

// theta <- w (deep copy); w is untouched.
AgentParams sync_target(const AgentParams& agent);

// Index of the largest entry; ties go to the lowest index.
std::size_t greedy_action(std::span<const double> q);

// r + gamma * max_a' q(s', a'; theta), or r when the transition is terminal.
double bellman_target(const MlpDef& def, const FlatParams& theta, const Transition& transition,
                      double gamma);

// q(s, a; params) for every state, read through the MDP's feature map.
QTable q_table(const MdpSpec& spec, const MlpDef& def, const FlatParams& params);

}  // namespace resetopt
