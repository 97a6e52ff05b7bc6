#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resetopt/agent.hpp"
#include "resetopt/mdp.hpp"
#include "resetopt/mlp.hpp"
#include "resetopt/optimizers.hpp"
#include "resetopt/replay.hpp"

namespace resetopt {

enum class ResetKind { never, per_iteration, random };

std::string to_string(ResetKind k);
ResetKind reset_kind_from_string(const std::string& name);

struct ResetPolicy {
  ResetKind kind = ResetKind::never;
  double probability = 1.0;  // used by ResetKind::random only

  // Random resets at rate 1/K, the same expected count as per_iteration.
  static ResetPolicy random_for(std::size_t K) {
    return {ResetKind::random, 1.0 / static_cast<double>(K)};
  }
  void validate() const;
};

// per_iteration: true iff k == 0. never: false. random: Bernoulli(probability).
bool decide_reset(const ResetPolicy& policy, std::size_t k, Rng& rng);

struct TrainConfig {
  std::size_t K = 8000;  // gradient steps per iteration
  std::size_t T = 1;     // iterations
  std::size_t batch_size = 32;
  std::size_t env_steps_per_grad = 1;
  std::size_t eval_episodes = 10;
  std::size_t max_episode_steps = 100;
  std::uint64_t seed = 0;
  OptimHyper optimizer;
  ResetPolicy reset;
  double gamma = 0.9;
  std::size_t prefill_steps = 500;
  double epsilon_greedy = 0.1;
  std::size_t replay_capacity = 10000;
  std::vector<std::size_t> hidden{32};
  Activation activation = Activation::relu;
  // Replace the K gradient steps by a closed-form least-squares fit of
  // H(theta, .) over every (s, a) pair with expected targets. Linear nets only.
  bool exact_minimization = false;
  // Test fixture: poison the gradient with NaN at this global step.
  std::optional<std::uint64_t> inject_nan_at_step;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

// Network shape for an environment: {feature_dim, hidden..., n_actions}.
MlpDef network_for(const MdpSpec& spec, const TrainConfig& cfg);

// Independent generator per concern so reset-policy comparisons replay the
// same environment and sampling randomness.
enum class RngStream : std::uint32_t { init = 1, env = 2, batch = 3, reset = 4, eval = 5 };
Rng make_stream(std::uint64_t seed, RngStream stream);

struct RunRecord {
  std::string env;
  std::string optimizer;
  std::string policy;
  std::size_t K = 0;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;
  nlohmann::json config;
  std::vector<double> eval_returns;        // one per iteration
  std::vector<std::uint64_t> reset_counts;  // one per iteration
  std::uint64_t optimizer_steps = 0;
  double wall_clock_seconds = 0.0;  // reported on stderr, kept out of result files
  bool failed = false;
  std::string error;
};

nlohmann::json to_json(const RunRecord& rec);
RunRecord run_record_from_json(const nlohmann::json& doc);

// Mutable per-run machinery: replay data, the collector's position in the
// environment, and the generator streams.
struct RunContext {
  RunContext(const MdpSpec& spec, const TrainConfig& cfg);

  const MdpSpec* spec;
  MlpDef def;
  std::vector<Tensor> features;
  ReplayBuffer buffer;
  Rng env_rng;
  Rng batch_rng;
  Rng reset_rng;
  std::size_t env_state = 0;
  std::size_t episode_steps = 0;
  std::uint64_t global_step = 0;

  // Called after every optimizer step with the inner index k.
  std::function<void(const AgentParams&, std::size_t k, const StepReport&)> on_step;

  // One environment transition under epsilon-greedy on w, pushed to the buffer.
  void collect(const FlatParams& w, double epsilon);
  // Uniform-random transitions used to seed the buffer.
  void prefill(std::size_t steps);

 private:
  void advance(std::size_t action);
  std::size_t max_episode_steps_;
};

struct InnerStats {
  std::uint64_t resets = 0;
  std::uint64_t optimizer_steps = 0;
  double mean_loss = 0.0;
  std::vector<StepReport> reports;
};

struct InnerResult {
  AgentParams agent;
  OptimizerState state;
  InnerStats stats;
};

// Starts from w = theta, then K rounds of: reset decision, env collection,
// batch sampling, TD gradient with theta frozen, optional proximal term,
// optimizer step.
InnerResult run_inner_iteration(AgentParams agent, OptimizerState state, RunContext& ctx,
                                const TrainConfig& cfg, std::size_t t);

// argmin_w H(theta, w) for a linear network, using the expected Bellman
// target of every non-terminal (s, a) pair. Minimum-norm solution.
FlatParams exact_minimize(const MdpSpec& spec, const MlpDef& def, const FlatParams& theta, double gamma);

// Mean undiscounted return of the greedy policy of `params`. The generator
// is reseeded per call so every evaluation sees the same randomness.
double evaluate_greedy(const MdpSpec& spec, const MlpDef& def, const FlatParams& params,
                       const TrainConfig& cfg);

struct TrainResult {
  RunRecord record;
  AgentParams agent;
  OptimizerState optimizer;
};

TrainResult train(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name = "env");
RunRecord run_training(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name = "env");

std::string fingerprint_of(const nlohmann::json& doc);

// Identity of a run: environment name and tables plus the full config.
std::string run_fingerprint(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name);

}  // namespace resetopt
