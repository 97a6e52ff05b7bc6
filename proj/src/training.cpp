#include "resetopt/training.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace resetopt {

std::string to_string(ResetKind k) {
  switch (k) {
    case ResetKind::never: return "never";
    case ResetKind::per_iteration: return "per_iteration";
    case ResetKind::random: return "random";
  }
  return "unknown";
}

ResetKind reset_kind_from_string(const std::string& name) {
  if (name == "never") return ResetKind::never;
  if (name == "per_iteration") return ResetKind::per_iteration;
  if (name == "random") return ResetKind::random;
  throw std::invalid_argument("unknown reset policy '" + name + "'");
}

void ResetPolicy::validate() const {
  if (kind == ResetKind::random && !(probability > 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("random reset probability must lie in (0,1]");
  }
}

bool decide_reset(const ResetPolicy& policy, std::size_t k, Rng& rng) {
  switch (policy.kind) {
    case ResetKind::never: return false;
    case ResetKind::per_iteration: return k == 0;
    case ResetKind::random: return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < policy.probability;
  }
  return false;
}

void TrainConfig::validate() const {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  if (max_episode_steps < 1) throw std::invalid_argument("max_episode_steps must be >= 1");
  if (!exact_minimization && prefill_steps < 1) throw std::invalid_argument("prefill_steps must be >= 1");
  if (replay_capacity < 1) throw std::invalid_argument("replay_capacity must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0,1)");
  if (!(epsilon_greedy >= 0.0 && epsilon_greedy <= 1.0)) throw std::invalid_argument("epsilon_greedy must lie in [0,1]");
  for (auto h : hidden) {
    if (h == 0) throw std::invalid_argument("hidden widths must be positive");
  }
  if (exact_minimization && !hidden.empty()) {
    throw std::invalid_argument("exact minimization needs a linear network (no hidden layers)");
  }
  optimizer.validate();
  reset.validate();
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"K", cfg.K},
      {"T", cfg.T},
      {"batch_size", cfg.batch_size},
      {"env_steps_per_grad", cfg.env_steps_per_grad},
      {"eval_episodes", cfg.eval_episodes},
      {"max_episode_steps", cfg.max_episode_steps},
      {"seed", cfg.seed},
      {"gamma", cfg.gamma},
      {"prefill_steps", cfg.prefill_steps},
      {"epsilon_greedy", cfg.epsilon_greedy},
      {"replay_capacity", cfg.replay_capacity},
      {"hidden", cfg.hidden},
      {"activation", to_string(cfg.activation)},
      {"exact_minimization", cfg.exact_minimization},
      {"optimizer",
       {{"kind", to_string(cfg.optimizer.kind)},
        {"alpha", cfg.optimizer.alpha},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"epsilon", cfg.optimizer.epsilon},
        {"prox_coeff", cfg.optimizer.prox_coeff},
        {"radam_threshold", cfg.optimizer.radam_threshold}}},
      {"reset", {{"kind", to_string(cfg.reset.kind)}, {"probability", cfg.reset.probability}}},
      {"inject_nan_at_step",
       cfg.inject_nan_at_step ? nlohmann::json(*cfg.inject_nan_at_step) : nlohmann::json(nullptr)},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  cfg.K = doc.value("K", cfg.K);
  cfg.T = doc.value("T", cfg.T);
  cfg.batch_size = doc.value("batch_size", cfg.batch_size);
  cfg.env_steps_per_grad = doc.value("env_steps_per_grad", cfg.env_steps_per_grad);
  cfg.eval_episodes = doc.value("eval_episodes", cfg.eval_episodes);
  cfg.max_episode_steps = doc.value("max_episode_steps", cfg.max_episode_steps);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.gamma = doc.value("gamma", cfg.gamma);
  cfg.prefill_steps = doc.value("prefill_steps", cfg.prefill_steps);
  cfg.epsilon_greedy = doc.value("epsilon_greedy", cfg.epsilon_greedy);
  cfg.replay_capacity = doc.value("replay_capacity", cfg.replay_capacity);
  cfg.hidden = doc.value("hidden", cfg.hidden);
  cfg.activation = activation_from_string(doc.value("activation", to_string(cfg.activation)));
  cfg.exact_minimization = doc.value("exact_minimization", cfg.exact_minimization);
  if (doc.contains("optimizer")) {
    const auto& o = doc.at("optimizer");
    auto& h = cfg.optimizer;
    h.kind = optimizer_kind_from_string(o.value("kind", to_string(h.kind)));
    h.alpha = o.value("alpha", h.alpha);
    h.beta1 = o.value("beta1", h.beta1);
    h.beta2 = o.value("beta2", h.beta2);
    h.epsilon = o.value("epsilon", h.epsilon);
    h.prox_coeff = o.value("prox_coeff", h.prox_coeff);
    h.radam_threshold = o.value("radam_threshold", h.radam_threshold);
  }
  if (doc.contains("reset")) {
    const auto& r = doc.at("reset");
    cfg.reset.kind = reset_kind_from_string(r.value("kind", std::string("never")));
    if (cfg.reset.kind == ResetKind::random && !r.contains("probability")) {
      cfg.reset = ResetPolicy::random_for(cfg.K);
    } else {
      cfg.reset.probability = r.value("probability", 1.0);
    }
  }
  if (doc.contains("inject_nan_at_step") && !doc.at("inject_nan_at_step").is_null()) {
    cfg.inject_nan_at_step = doc.at("inject_nan_at_step").get<std::uint64_t>();
  }
  return cfg;
}

MlpDef network_for(const MdpSpec& spec, const TrainConfig& cfg) {
  MlpDef def;
  def.layer_widths.push_back(spec.feature_dim());
  def.layer_widths.insert(def.layer_widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  def.layer_widths.push_back(spec.n_actions);
  def.activation = cfg.activation;
  def.seed = make_stream(cfg.seed, RngStream::init)();
  return def;
}

Rng make_stream(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

nlohmann::json to_json(const RunRecord& rec) {
  nlohmann::json doc{
      {"env", rec.env},
      {"optimizer", rec.optimizer},
      {"policy", rec.policy},
      {"K", rec.K},
      {"T", rec.T},
      {"seed", rec.seed},
      {"fingerprint", rec.fingerprint},
      {"config", rec.config},
      {"eval_returns", rec.eval_returns},
      {"reset_counts", rec.reset_counts},
      {"optimizer_steps", rec.optimizer_steps},
      {"failed", rec.failed},
  };
  if (rec.failed) doc["error"] = rec.error;
  return doc;
}

RunRecord run_record_from_json(const nlohmann::json& doc) {
  RunRecord rec;
  rec.env = doc.at("env").get<std::string>();
  rec.optimizer = doc.at("optimizer").get<std::string>();
  rec.policy = doc.at("policy").get<std::string>();
  rec.K = doc.at("K").get<std::size_t>();
  rec.T = doc.at("T").get<std::size_t>();
  rec.seed = doc.at("seed").get<std::uint64_t>();
  rec.fingerprint = doc.at("fingerprint").get<std::string>();
  rec.config = doc.value("config", nlohmann::json::object());
  rec.eval_returns = doc.at("eval_returns").get<std::vector<double>>();
  rec.reset_counts = doc.at("reset_counts").get<std::vector<std::uint64_t>>();
  rec.optimizer_steps = doc.at("optimizer_steps").get<std::uint64_t>();
  rec.failed = doc.value("failed", false);
  rec.error = doc.value("error", std::string());
  return rec;
}

RunContext::RunContext(const MdpSpec& spec_in, const TrainConfig& cfg)
    : spec(&spec_in),
      def(network_for(spec_in, cfg)),
      features(feature_table(spec_in)),
      buffer(cfg.replay_capacity),
      env_rng(make_stream(cfg.seed, RngStream::env)),
      batch_rng(make_stream(cfg.seed, RngStream::batch)),
      reset_rng(make_stream(cfg.seed, RngStream::reset)),
      max_episode_steps_(cfg.max_episode_steps) {
  env_state = initial_state(*spec, env_rng);
}

void RunContext::advance(std::size_t action) {
  const auto out = env_step(*spec, env_state, action, env_rng);
  buffer.push({features[env_state], action, out.reward, features[out.next_state], out.terminal});
  ++episode_steps;
  env_state = out.next_state;
  if (out.terminal || episode_steps >= max_episode_steps_) {
    env_state = initial_state(*spec, env_rng);
    episode_steps = 0;
  }
}

void RunContext::collect(const FlatParams& w, double epsilon) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::size_t action;
  if (coin(env_rng) < epsilon) {
    action = std::uniform_int_distribution<std::size_t>(0, spec->n_actions - 1)(env_rng);
  } else {
    action = greedy_action(forward(def, w, features[env_state]).values());
  }
  advance(action);
}

void RunContext::prefill(std::size_t steps) {
  std::uniform_int_distribution<std::size_t> pick(0, spec->n_actions - 1);
  for (std::size_t j = 0; j < steps; ++j) advance(pick(env_rng));
}

InnerResult run_inner_iteration(AgentParams agent, OptimizerState state, RunContext& ctx,
                                const TrainConfig& cfg, std::size_t /*t*/) {
  if (ctx.buffer.empty()) throw std::invalid_argument("inner iteration needs a nonempty replay buffer");
  InnerResult out{std::move(agent), std::move(state), {}};
  out.agent.w = out.agent.theta;
  out.stats.reports.reserve(cfg.K);
  double loss_sum = 0.0;

  for (std::size_t k = 0; k < cfg.K; ++k) {
    if (decide_reset(cfg.reset, k, ctx.reset_rng)) {
      out.state = reset_state(out.state);
      ++out.stats.resets;
    }
    for (std::size_t e = 0; e < cfg.env_steps_per_grad; ++e) ctx.collect(out.agent.w, cfg.epsilon_greedy);

    const auto batch = sample_batch(ctx.buffer, cfg.batch_size, ctx.batch_rng);
    auto [loss, grad] = grad_td_loss(ctx.def, out.agent.w, out.agent.theta, batch, cfg.gamma);
    loss_sum += loss;
    if (cfg.optimizer.prox_coeff > 0.0) {
      grad = apply_proximal(grad, out.agent.w, out.agent.theta, cfg.optimizer.prox_coeff);
    }
    if (cfg.inject_nan_at_step && *cfg.inject_nan_at_step == ctx.global_step) {
      grad[0] = std::numeric_limits<double>::quiet_NaN();
    }

    auto step = optimizer_step(out.agent.w, grad, out.state, cfg.optimizer);
    out.agent.w = std::move(step.params);
    out.state = std::move(step.state);
    out.stats.reports.push_back(step.report);
    ++out.stats.optimizer_steps;
    ++ctx.global_step;
    if (ctx.on_step) ctx.on_step(out.agent, k, step.report);
  }
  out.stats.mean_loss = loss_sum / static_cast<double>(cfg.K);
  return out;
}

FlatParams exact_minimize(const MdpSpec& spec, const MlpDef& def, const FlatParams& theta, double gamma) {
  if (def.layer_count() != 1) throw std::invalid_argument("exact minimization needs a linear network");
  if (def.input_width() != spec.feature_dim() || def.output_width() != spec.n_actions) {
    throw DimensionError("network does not match the environment");
  }
  const auto features = feature_table(spec);
  std::vector<double> next_value(spec.n_states, 0.0);
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    if (spec.is_terminal(s)) continue;
    const auto q = forward(def, theta, features[s]);
    next_value[s] = q[greedy_action(q.values())];
  }

  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    if (!spec.is_terminal(s)) rows.push_back(s);
  }
  const auto d = def.input_width();
  Eigen::MatrixXd design(rows.size(), d + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < d; ++i) design(r, i) = features[rows[r]][i];
    design(r, d) = 1.0;
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> solver(design);

  FlatParams out = zero_params(def);
  const auto off = layer_offsets(def, 0);
  for (std::size_t a = 0; a < spec.n_actions; ++a) {
    Eigen::VectorXd target(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& p = spec.transition[rows[r]][a];
      double expected = 0.0;
      for (std::size_t sp = 0; sp < spec.n_states; ++sp) expected += p[sp] * next_value[sp];
      target(r) = spec.reward[rows[r]][a] + gamma * expected;
    }
    const Eigen::VectorXd coef = solver.solve(target);
    for (std::size_t i = 0; i < d; ++i) out.values[off.weights + a * d + i] = coef(i);
    out.values[off.biases + a] = coef(d);
  }
  return out;
}

double evaluate_greedy(const MdpSpec& spec, const MlpDef& def, const FlatParams& params,
                       const TrainConfig& cfg) {
  std::vector<std::size_t> actions(spec.n_states, 0);
  const auto features = feature_table(spec);
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    actions[s] = greedy_action(forward(def, params, features[s]).values());
  }
  Rng rng = make_stream(cfg.seed, RngStream::eval);
  return mean_episode_return(spec, table_policy(std::move(actions)), cfg.eval_episodes,
                             cfg.max_episode_steps, rng);
}

std::string fingerprint_of(const nlohmann::json& doc) {
  // FNV-1a over the canonical (sorted-key) dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string run_fingerprint(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name) {
  return fingerprint_of({{"env", env_name}, {"mdp", mdp_to_json(spec)}, {"config", to_json(cfg)}});
}

TrainResult train(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name) {
  cfg.validate();
  spec.validate();
  const auto started = std::chrono::steady_clock::now();

  RunContext ctx(spec, cfg);
  const FlatParams initial = init_params(ctx.def);
  TrainResult out{{}, {initial, initial}, fresh_state(initial.values.shape())};

  auto& rec = out.record;
  rec.env = env_name;
  rec.optimizer = to_string(cfg.optimizer.kind);
  rec.policy = cfg.exact_minimization ? "exact" : to_string(cfg.reset.kind);
  rec.K = cfg.K;
  rec.T = cfg.T;
  rec.seed = cfg.seed;
  rec.config = to_json(cfg);
  rec.fingerprint = run_fingerprint(cfg, spec, env_name);

  if (!cfg.exact_minimization) ctx.prefill(cfg.prefill_steps);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    if (cfg.exact_minimization) {
      out.agent.w = exact_minimize(spec, ctx.def, out.agent.theta, cfg.gamma);
      rec.reset_counts.push_back(0);
    } else {
      auto inner = run_inner_iteration(std::move(out.agent), std::move(out.optimizer), ctx, cfg, t);
      out.agent = std::move(inner.agent);
      out.optimizer = std::move(inner.state);
      rec.reset_counts.push_back(inner.stats.resets);
      rec.optimizer_steps += inner.stats.optimizer_steps;
    }
    out.agent = sync_target(out.agent);
    rec.eval_returns.push_back(evaluate_greedy(spec, ctx.def, out.agent.theta, cfg));
  }
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

RunRecord run_training(const TrainConfig& cfg, const MdpSpec& spec, const std::string& env_name) {
  return train(cfg, spec, env_name).record;
}

}  // namespace resetopt
