#include "resetopt/agent.hpp"

#include <stdexcept>

namespace resetopt {

AgentParams sync_target(const AgentParams& agent) {
  require_same_shape(agent.theta.values, agent.w.values, "target vs online parameters");
  return {agent.w, agent.w};
}

std::size_t greedy_action(std::span<const double> q) {
  if (q.empty()) throw std::invalid_argument("greedy_action over an empty q-vector");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

double bellman_target(const MlpDef& def, const FlatParams& theta, const Transition& transition,
                      double gamma) {
  if (transition.terminal) return transition.r;
  const Tensor q_next = forward(def, theta, transition.s_next);
  return transition.r + gamma * q_next[greedy_action(q_next.values())];
}

QTable q_table(const MdpSpec& spec, const MlpDef& def, const FlatParams& params) {
  QTable table;
  table.reserve(spec.n_states);
  for (const auto& x : feature_table(spec)) table.push_back(forward(def, params, x).data());
  return table;
}

}  // namespace resetopt
