#include "resetopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace resetopt {

namespace fs = std::filesystem;

double normalize_score(double agent, const NormalizationAnchors& anchors) {
  const double span = anchors.reference_score - anchors.random_score;
  if (span == 0.0) throw DegenerateEnvironment("normalization anchors coincide");
  return (agent - anchors.random_score) / span;
}

NormalizationAnchors compute_anchors(const MdpSpec& spec, const QTable& oracle_q, std::size_t n_episodes,
                                     std::size_t max_episode_steps, Rng& rng) {
  if (n_episodes < 1) throw std::invalid_argument("anchors need at least one episode");
  if (oracle_q.size() != spec.n_states) throw DimensionError("oracle table does not match the MDP");
  std::vector<std::size_t> greedy(spec.n_states);
  for (std::size_t s = 0; s < spec.n_states; ++s) greedy[s] = greedy_action(oracle_q[s]);

  NormalizationAnchors anchors;
  anchors.random_score =
      mean_episode_return(spec, uniform_random_policy(spec.n_actions), n_episodes, max_episode_steps, rng);
  anchors.reference_score =
      mean_episode_return(spec, table_policy(std::move(greedy)), n_episodes, max_episode_steps, rng);
  const double scale = std::max({1.0, std::abs(anchors.random_score), std::abs(anchors.reference_score)});
  if (std::abs(anchors.reference_score - anchors.random_score) <= 1e-12 * scale) {
    throw DegenerateEnvironment("random and oracle-greedy returns coincide; scores cannot be normalized");
  }
  return anchors;
}

std::vector<double> aggregate(const std::vector<std::vector<double>>& curves, AggregateStat stat) {
  if (curves.empty()) throw std::invalid_argument("cannot aggregate an empty set of curves");
  const auto n = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != n) throw DimensionError("cannot aggregate curves of different lengths");
  }
  std::vector<double> out(n);
  std::vector<double> column(curves.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < curves.size(); ++c) column[c] = curves[c][i];
    std::sort(column.begin(), column.end());
    if (stat == AggregateStat::median) {
      const auto mid = column.size() / 2;
      out[i] = column.size() % 2 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
    } else {
      double sum = 0.0;
      for (double x : column) sum += x;
      out[i] = sum / static_cast<double>(column.size());
    }
  }
  return out;
}

double area_under_curve(const std::vector<double>& curve, bool normalized) {
  if (curve.empty()) throw std::invalid_argument("area under an empty curve");
  if (curve.size() == 1) return curve.front();
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) area += 0.5 * (curve[i - 1] + curve[i]);
  return normalized ? area / static_cast<double>(curve.size() - 1) : area;
}

bool PoisonRule::matches(const CellKey& key) const {
  return (!env || *env == key.env) && (!optimizer || *optimizer == key.optimizer) &&
         (!policy || *policy == key.policy) && (!K || *K == key.K) && (!seed || *seed == key.seed);
}

void SweepConfig::validate() const {
  if (envs.empty() || optimizers.empty() || policies.empty() || K_values.empty() || seeds.empty()) {
    throw std::invalid_argument("sweep grid is empty");
  }
  if (budget == 0) throw std::invalid_argument("sweep budget must be positive");
  std::set<std::string> names;
  for (const auto& e : envs) {
    if (!names.insert(e.name).second) throw std::invalid_argument("duplicate environment name '" + e.name + "'");
  }
  for (auto K : K_values) {
    if (K == 0 || budget % K != 0) {
      throw std::invalid_argument("every K must divide the budget " + std::to_string(budget) + " (K=" +
                                  std::to_string(K) + ")");
    }
  }
  if (anchor_episodes < 1) throw std::invalid_argument("anchor_episodes must be >= 1");
}

std::vector<SweepCell> enumerate_cells(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<SweepCell> cells;
  for (const auto& env : cfg.envs) {
    for (const auto& opt : cfg.optimizers) {
      for (auto policy : cfg.policies) {
        for (auto K : cfg.K_values) {
          for (auto seed : cfg.seeds) {
            SweepCell cell;
            cell.key = {env.name, to_string(opt.kind), to_string(policy), K, seed};
            cell.env = &env;
            auto& c = cell.config;
            c = cfg.base;
            c.K = K;
            c.T = cfg.budget / K;
            c.seed = seed;
            c.optimizer = opt;
            c.gamma = env.spec.gamma;
            c.reset = policy == ResetKind::random ? ResetPolicy::random_for(K) : ResetPolicy{policy, 1.0};
            c.inject_nan_at_step.reset();
            for (const auto& rule : cfg.poison) {
              if (rule.matches(cell.key)) c.inject_nan_at_step = rule.step;
            }
            cell.fingerprint = run_fingerprint(c, env.spec, env.name);
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

std::vector<CellKey> SweepResult::failed_cells() const {
  std::vector<CellKey> out;
  for (const auto& r : records) {
    if (r.failed) out.push_back({r.env, r.optimizer, r.policy, r.K, r.seed});
  }
  return out;
}

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CellKey key_of(const RunRecord& r) { return {r.env, r.optimizer, r.policy, r.K, r.seed}; }

RunRecord run_cell(const SweepCell& cell) {
  try {
    return run_training(cell.config, cell.env->spec, cell.env->name);
  } catch (const std::exception& e) {
    RunRecord rec;
    rec.env = cell.key.env;
    rec.optimizer = cell.key.optimizer;
    rec.policy = cell.key.policy;
    rec.K = cell.key.K;
    rec.T = cell.config.T;
    rec.seed = cell.key.seed;
    rec.config = to_json(cell.config);
    rec.fingerprint = cell.fingerprint;
    rec.failed = true;
    rec.error = e.what();
    return rec;
  }
}

}  // namespace

SweepSummary summarize(const std::vector<RunRecord>& records,
                       const std::map<std::string, NormalizationAnchors>& anchors, bool auc_normalized) {
  SweepSummary summary;

  std::vector<const RunRecord*> ordered;
  for (const auto& r : records) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RunRecord* a, const RunRecord* b) { return key_of(*a) < key_of(*b); });

  using Group = std::tuple<std::string, std::string, std::size_t>;  // optimizer, policy, K
  std::map<Group, std::map<std::string, std::vector<std::vector<double>>>> grouped;
  std::map<Group, std::size_t> failed;

  for (const RunRecord* r : ordered) {
    const Group g{r->optimizer, r->policy, r->K};
    if (r->failed) {
      ++failed[g];
      summary.warnings.push_back("excluding failed cell env=" + r->env + " optimizer=" + r->optimizer +
                                 " policy=" + r->policy + " K=" + std::to_string(r->K) +
                                 " seed=" + std::to_string(r->seed) + ": " + r->error);
      continue;
    }
    const auto it = anchors.find(r->env);
    if (it == anchors.end()) {
      summary.warnings.push_back("no normalization anchors for env '" + r->env + "'; run excluded");
      continue;
    }
    std::vector<double> normalized;
    normalized.reserve(r->eval_returns.size());
    for (std::size_t i = 0; i < r->eval_returns.size(); ++i) {
      normalized.push_back(normalize_score(r->eval_returns[i], it->second));
      summary.curves.push_back({r->env, r->optimizer, r->policy, r->K, r->seed, i, r->eval_returns[i],
                                normalized.back()});
    }
    grouped[g][r->env].push_back(std::move(normalized));
  }

  for (auto& [g, by_env] : grouped) {
    AucRow row;
    std::tie(row.optimizer, row.policy, row.K) = g;
    row.n_failed = failed.count(g) ? failed[g] : 0;
    row.partial = row.n_failed > 0;
    std::vector<std::vector<double>> env_curves;
    try {
      for (auto& [env, seed_curves] : by_env) {
        row.n_runs += seed_curves.size();
        env_curves.push_back(aggregate(seed_curves, AggregateStat::mean));
      }
      row.n_envs = env_curves.size();
      row.median_auc = area_under_curve(aggregate(env_curves, AggregateStat::median), auc_normalized);
      row.mean_auc = area_under_curve(aggregate(env_curves, AggregateStat::mean), auc_normalized);
    } catch (const DimensionError& e) {
      summary.warnings.push_back("skipping " + row.optimizer + "/" + row.policy + "/K=" + std::to_string(row.K) +
                                 ": " + e.what());
      continue;
    }
    summary.auc.push_back(row);
  }
  for (const auto& [g, n] : failed) {
    if (grouped.count(g)) continue;
    AucRow row;
    std::tie(row.optimizer, row.policy, row.K) = g;
    row.n_failed = n;
    row.partial = true;
    row.median_auc = row.mean_auc = std::nan("");
    summary.auc.push_back(row);
  }
  std::sort(summary.auc.begin(), summary.auc.end(), [](const AucRow& a, const AucRow& b) {
    return std::tie(a.optimizer, a.policy, a.K) < std::tie(b.optimizer, b.policy, b.K);
  });
  return summary;
}

fs::path results_file(const fs::path& dir) { return dir / "results.jsonl"; }
fs::path anchors_file(const fs::path& dir) { return dir / "anchors.json"; }

std::vector<RunRecord> read_results(const fs::path& dir) {
  std::vector<RunRecord> out;
  std::ifstream in(results_file(dir));
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A torn final line from an interrupted sweep is dropped; the cell reruns.
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) continue;
    out.push_back(run_record_from_json(doc));
  }
  return out;
}

void append_result(const fs::path& dir, const RunRecord& rec) {
  fs::create_directories(dir);
  std::ofstream out(results_file(dir), std::ios::app);
  out << to_json(rec).dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed appending to " + results_file(dir).string());
}

void write_results(const fs::path& dir, const std::vector<RunRecord>& records) {
  fs::create_directories(dir);
  const auto tmp = results_file(dir).string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, results_file(dir));
}

std::map<std::string, NormalizationAnchors> read_anchors(const fs::path& dir) {
  std::map<std::string, NormalizationAnchors> out;
  std::ifstream in(anchors_file(dir));
  if (!in) return out;
  const auto doc = nlohmann::json::parse(in);
  for (const auto& [name, a] : doc.at("anchors").items()) {
    out[name] = {a.at("random_score").get<double>(), a.at("reference_score").get<double>()};
  }
  return out;
}

void write_anchors(const fs::path& dir, const std::map<std::string, NormalizationAnchors>& anchors) {
  auto merged = read_anchors(dir);
  for (const auto& [name, a] : anchors) merged[name] = a;
  nlohmann::json doc = {{"anchors", nlohmann::json::object()}};
  for (const auto& [name, a] : merged) {
    doc["anchors"][name] = {{"random_score", a.random_score}, {"reference_score", a.reference_score}};
  }
  fs::create_directories(dir);
  std::ofstream out(anchors_file(dir), std::ios::trunc);
  out << doc.dump(2) << '\n';
}

std::string curves_csv(const SweepSummary& summary) {
  std::ostringstream out;
  out << "env,optimizer,policy,K,seed,iteration,raw,normalized\n";
  for (const auto& p : summary.curves) {
    out << p.env << ',' << p.optimizer << ',' << p.policy << ',' << p.K << ',' << p.seed << ',' << p.iteration
        << ',' << fmt_double(p.raw) << ',' << fmt_double(p.normalized) << '\n';
  }
  return out.str();
}

std::string auc_csv(const SweepSummary& summary) {
  std::ostringstream out;
  out << "optimizer,policy,K,median_auc,mean_auc,n_envs,n_runs,n_failed,partial\n";
  for (const auto& r : summary.auc) {
    out << r.optimizer << ',' << r.policy << ',' << r.K << ',' << fmt_double(r.median_auc) << ','
        << fmt_double(r.mean_auc) << ',' << r.n_envs << ',' << r.n_runs << ',' << r.n_failed << ','
        << (r.partial ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string median_auc_table(const SweepSummary& summary) {
  std::map<std::string, std::vector<const AucRow*>> by_opt;
  for (const auto& r : summary.auc) by_opt[r.optimizer].push_back(&r);

  std::ostringstream out;
  for (const auto& [opt, rows] : by_opt) {
    std::set<std::size_t> Ks;
    std::set<std::string> policies;
    for (const auto* r : rows) {
      Ks.insert(r->K);
      policies.insert(r->policy);
    }
    out << "median AUC of normalized score, optimizer=" << opt << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-15s", "policy \\ K");
    out << buf;
    for (auto K : Ks) {
      std::snprintf(buf, sizeof buf, "%12zu", K);
      out << buf;
    }
    out << '\n';
    bool any_partial = false;
    for (const auto& policy : policies) {
      std::snprintf(buf, sizeof buf, "%-15s", policy.c_str());
      out << buf;
      for (auto K : Ks) {
        const auto it = std::find_if(rows.begin(), rows.end(),
                                     [&](const AucRow* r) { return r->policy == policy && r->K == K; });
        if (it == rows.end()) {
          std::snprintf(buf, sizeof buf, "%12s", "-");
        } else {
          any_partial = any_partial || (*it)->partial;
          std::snprintf(buf, sizeof buf, "%11.4f%c", (*it)->median_auc, (*it)->partial ? '*' : ' ');
        }
        out << buf;
      }
      out << '\n';
    }
    if (any_partial) out << "(* aggregate over a partial grid: failed cells excluded)\n";
  }
  return out.str();
}

SweepResult run_sweep(const SweepConfig& cfg, const fs::path& results_dir, const SweepProgress& progress) {
  const auto cells = enumerate_cells(cfg);
  fs::create_directories(results_dir);

  SweepResult result;
  for (std::size_t e = 0; e < cfg.envs.size(); ++e) {
    const auto& env = cfg.envs[e];
    const auto q_star = value_iteration_oracle(env.spec, 1e-10);
    Rng rng = make_stream(cfg.anchor_seed, RngStream::eval);
    result.anchors[env.name] =
        compute_anchors(env.spec, q_star, cfg.anchor_episodes, cfg.base.max_episode_steps, rng);
  }
  write_anchors(results_dir, result.anchors);

  const auto previous = read_results(results_dir);
  std::map<std::string, RunRecord> completed;
  for (const auto& r : previous) {
    if (!r.failed) completed[r.fingerprint] = r;
  }

  std::vector<std::optional<RunRecord>> slots(cells.size());
  std::vector<std::size_t> pending;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto it = completed.find(cells[c].fingerprint);
    if (it != completed.end()) {
      slots[c] = it->second;
      ++result.skipped;
    } else {
      pending.push_back(c);
    }
  }

  std::mutex writer;
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  auto worker = [&] {
    for (;;) {
      const auto j = next.fetch_add(1);
      if (j >= pending.size()) return;
      const auto c = pending[j];
      RunRecord rec = run_cell(cells[c]);
      std::lock_guard lock(writer);
      append_result(results_dir, rec);
      slots[c] = std::move(rec);
      ++done;
      if (progress) progress(done, pending.size(), *slots[c]);
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, pending.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  result.executed = pending.size();

  std::set<std::string> grid_prints;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    grid_prints.insert(cells[c].fingerprint);
    result.records.push_back(std::move(*slots[c]));
  }
  std::vector<RunRecord> on_disk = result.records;
  std::set<std::string> kept;
  for (const auto& r : previous) {
    if (!grid_prints.count(r.fingerprint) && kept.insert(r.fingerprint).second) on_disk.push_back(r);
  }
  write_results(results_dir, on_disk);

  result.summary = summarize(result.records, read_anchors(results_dir), cfg.auc_normalized);
  return result;
}

}  // namespace resetopt
