#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "resetopt/harness.hpp"

using namespace resetopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("resetopt_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SweepConfig small_sweep() {
  SweepConfig cfg;
  cfg.envs = {{"g-a", make_garnet(6, 2, 2, 1)}, {"g-b", make_garnet(6, 2, 2, 2)}};
  cfg.optimizers = {OptimHyper{}};
  cfg.optimizers[0].alpha = 1e-2;
  cfg.policies = {ResetKind::never, ResetKind::per_iteration};
  cfg.K_values = {4, 16};
  cfg.budget = 64;
  cfg.seeds = {0, 1};
  cfg.base.batch_size = 8;
  cfg.base.hidden = {8};
  cfg.base.prefill_steps = 30;
  cfg.base.eval_episodes = 3;
  cfg.base.max_episode_steps = 20;
  cfg.anchor_episodes = 20;
  return cfg;
}

RunRecord fake_record(const std::string& env, const std::string& policy, std::size_t K, std::uint64_t seed,
                      std::vector<double> returns) {
  RunRecord r;
  r.env = env;
  r.optimizer = "adam";
  r.policy = policy;
  r.K = K;
  r.T = returns.size();
  r.seed = seed;
  r.fingerprint = env + policy + std::to_string(K) + "-" + std::to_string(seed);
  r.eval_returns = std::move(returns);
  r.reset_counts.assign(r.T, 0);
  return r;
}

}  // namespace

TEST_CASE("normalize_score") {
  CHECK(normalize_score(50, {10, 110}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(normalize_score(10, {10, 110}) == 0.0);
  CHECK(normalize_score(110, {10, 110}) == 1.0);
  CHECK_THROWS_AS(normalize_score(1, {3, 3}), DegenerateEnvironment);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 200; ++i) {
    const double agent = u(rng), lo = u(rng), hi = lo + 0.5 + std::abs(u(rng));
    const double scale = 0.1 + std::abs(u(rng)), shift = u(rng);
    const double base = normalize_score(agent, {lo, hi});
    const double mapped = normalize_score(scale * agent + shift, {scale * lo + shift, scale * hi + shift});
    CHECK(mapped == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("compute_anchors") {
  SUBCASE("all-zero rewards are degenerate") {
    auto spec = make_garnet(5, 2, 2, 0);
    for (auto& row : spec.reward) std::fill(row.begin(), row.end(), 0.0);
    Rng rng(0);
    CHECK_THROWS_AS(compute_anchors(spec, value_iteration_oracle(spec, 1e-10), 10, 20, rng), DegenerateEnvironment);
  }
  SUBCASE("deterministic gridworld reference is the optimal return") {
    const auto g = make_gridworld(4, 4, 3, 3, -0.01, 0);
    Rng rng(1);
    const auto a = compute_anchors(g, value_iteration_oracle(g, 1e-10), 10, 100, rng);
    CHECK(a.reference_score == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(a.random_score < a.reference_score);
  }
  SUBCASE("deterministic given the seed") {
    const auto g = make_garnet(10, 3, 3, 4);
    const auto q = value_iteration_oracle(g, 1e-10);
    Rng r1(9), r2(9);
    CHECK(compute_anchors(g, q, 30, 40, r1) == compute_anchors(g, q, 30, 40, r2));
  }
}

TEST_CASE("aggregate") {
  CHECK(aggregate({{1, 2, 3}}, AggregateStat::median) == std::vector<double>{1, 2, 3});
  CHECK(aggregate({{1, 2, 3}}, AggregateStat::mean) == std::vector<double>{1, 2, 3});
  const std::vector<std::vector<double>> three{{0}, {1}, {2}};
  CHECK(aggregate(three, AggregateStat::median) == std::vector<double>{1});
  CHECK(aggregate(three, AggregateStat::mean) == std::vector<double>{1});
  CHECK(aggregate({{0}, {4}}, AggregateStat::median) == std::vector<double>{2});
  CHECK(aggregate({{0}, {1}, {2e9}}, AggregateStat::median) == std::vector<double>{1});
  CHECK_THROWS(aggregate({}, AggregateStat::median));
  CHECK_THROWS(aggregate({{1, 2}, {1}}, AggregateStat::mean));
}

TEST_CASE("area_under_curve") {
  CHECK(area_under_curve({0.7, 0.7, 0.7, 0.7}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(area_under_curve({0.0, 0.25, 0.5, 0.75, 1.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(area_under_curve({0.0, 1.0}, false) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(area_under_curve({0.3}) == 0.3);
  CHECK_THROWS(area_under_curve({}));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> lo(7), hi(7);
    for (std::size_t j = 0; j < 7; ++j) {
      lo[j] = u(rng);
      hi[j] = lo[j] + std::abs(u(rng));
    }
    CHECK(area_under_curve(hi) >= area_under_curve(lo));
  }
}

TEST_CASE("summary is invariant to record order") {
  std::vector<RunRecord> records;
  std::map<std::string, NormalizationAnchors> anchors;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::string env : {"e0", "e1", "e2", "e3"}) {
    anchors[env] = {u(rng) * 0.1, 1.0 + u(rng)};
    for (std::string policy : {"never", "per_iteration"}) {
      for (std::size_t K : {4u, 8u}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          std::vector<double> ret(5);
          for (auto& x : ret) x = u(rng);
          records.push_back(fake_record(env, policy, K, seed, ret));
        }
      }
    }
  }
  const auto base = summarize(records, anchors);
  CHECK(base.auc.size() == 4);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(records.begin(), records.end(), rng);
    const auto other = summarize(records, anchors);
    CHECK(other.auc == base.auc);
    CHECK(auc_csv(other) == auc_csv(base));
    CHECK(curves_csv(other) == curves_csv(base));
  }
}

TEST_CASE("summary excludes failed runs and labels the grid partial") {
  std::vector<RunRecord> records{fake_record("e", "never", 4, 0, {0.0, 1.0}), fake_record("e", "never", 4, 1, {1.0, 1.0})};
  records[1].failed = true;
  records[1].error = "boom";
  records[1].eval_returns.clear();
  const auto s = summarize(records, {{"e", {0.0, 1.0}}});
  REQUIRE(s.auc.size() == 1);
  CHECK(s.auc[0].partial);
  CHECK(s.auc[0].n_failed == 1);
  CHECK(s.auc[0].n_runs == 1);
  CHECK(s.auc[0].median_auc == doctest::Approx(0.5));
  CHECK_FALSE(s.warnings.empty());
  CHECK(median_auc_table(s).find('*') != std::string::npos);
}

TEST_CASE("sweep grid enumeration") {
  auto cfg = small_sweep();
  cfg.envs.resize(1);
  const auto cells = enumerate_cells(cfg);
  CHECK(cells.size() == 8);
  for (const auto& c : cells) CHECK(c.config.K * c.config.T == cfg.budget);
  CHECK(std::is_sorted(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.key < b.key; }));

  auto bad = cfg;
  bad.K_values = {};
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.K_values = {5};
  CHECK_THROWS(bad.validate());  // does not divide the budget
  bad = cfg;
  bad.envs.push_back(bad.envs[0]);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("run_sweep: grid size, resumability and persistence") {
  auto cfg = small_sweep();
  cfg.envs.resize(1);
  const auto dir = scratch_dir("resume");
  const auto first = run_sweep(cfg, dir);
  CHECK(first.records.size() == 8);
  CHECK(first.executed == 8);
  CHECK(first.failed_cells().empty());
  const auto full = slurp(results_file(dir));

  // Persistence: aggregates recomputed from disk are bit-identical.
  const auto reread = summarize(read_results(dir), read_anchors(dir));
  CHECK(reread.auc == first.summary.auc);
  CHECK(curves_csv(reread) == curves_csv(first.summary));

  // Interrupt: keep the first five lines plus a torn sixth.
  {
    std::istringstream in(full);
    std::string line, kept;
    for (int i = 0; i < 5 && std::getline(in, line); ++i) kept += line + "\n";
    std::getline(in, line);
    kept += line.substr(0, line.size() / 2);
    std::ofstream(results_file(dir), std::ios::trunc | std::ios::binary) << kept;
  }
  std::size_t progress_calls = 0;
  const auto second = run_sweep(cfg, dir, [&](std::size_t, std::size_t, const RunRecord&) { ++progress_calls; });
  CHECK(second.skipped == 5);
  CHECK(second.executed == 3);
  CHECK(progress_calls == 3);
  CHECK(slurp(results_file(dir)) == full);

  const auto third = run_sweep(cfg, dir);
  CHECK(third.executed == 0);
  CHECK(slurp(results_file(dir)) == full);
  fs::remove_all(dir);
}

TEST_CASE("run_sweep: a poisoned cell fails alone") {
  auto cfg = small_sweep();
  cfg.envs.resize(1);
  PoisonRule rule;
  rule.policy = "per_iteration";
  rule.K = 16;
  rule.seed = 1;
  rule.step = 3;
  cfg.poison = {rule};
  cfg.workers = 2;
  const auto dir = scratch_dir("poison");
  const auto result = run_sweep(cfg, dir);
  const auto failed = result.failed_cells();
  REQUIRE(failed.size() == 1);
  CHECK(failed[0].policy == "per_iteration");
  CHECK(failed[0].K == 16);
  CHECK(failed[0].seed == 1);
  std::size_t ok = 0;
  for (const auto& r : result.records) ok += !r.failed;
  CHECK(ok == 7);
  CHECK(read_results(dir).size() == 8);
  fs::remove_all(dir);
}

TEST_CASE("run_sweep: worker count does not change the output") {
  auto cfg = small_sweep();
  const auto d1 = scratch_dir("w1"), d3 = scratch_dir("w3");
  cfg.workers = 1;
  run_sweep(cfg, d1);
  cfg.workers = 3;
  run_sweep(cfg, d3);
  CHECK(slurp(results_file(d1)) == slurp(results_file(d3)));
  CHECK(slurp(anchors_file(d1)) == slurp(anchors_file(d3)));
  fs::remove_all(d1);
  fs::remove_all(d3);
}

TEST_CASE("toy sweep finishes well inside a minute on one core") {
  SweepConfig cfg;
  cfg.envs = {{"garnet-20", make_garnet(20, 4, 3, 0)}};
  cfg.optimizers = {OptimHyper{}};
  cfg.policies = {ResetKind::never, ResetKind::per_iteration};
  cfg.K_values = {8, 64};
  cfg.budget = 512;
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.workers = 1;
  const auto dir = scratch_dir("toy");
  const auto started = std::chrono::steady_clock::now();
  const auto result = run_sweep(cfg, dir);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  MESSAGE("toy sweep took " << seconds << " s");
  CHECK(result.records.size() == 20);
  CHECK(seconds < 60.0);
  fs::remove_all(dir);
}
