#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resetopt/mdp.hpp"
#include "resetopt/training.hpp"

namespace resetopt {

class DegenerateEnvironment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lower and upper score anchors for one environment. The upper anchor is
// the oracle-greedy return, standing in for a human reference score.
struct NormalizationAnchors {
  double random_score = 0.0;
  double reference_score = 1.0;

  friend bool operator==(const NormalizationAnchors&, const NormalizationAnchors&) = default;
};

// (agent - random) / (reference - random)
double normalize_score(double agent, const NormalizationAnchors& anchors);

NormalizationAnchors compute_anchors(const MdpSpec& spec, const QTable& oracle_q, std::size_t n_episodes,
                                     std::size_t max_episode_steps, Rng& rng);

enum class AggregateStat { median, mean };

// Pointwise statistic over equal-length curves. Values at each point are
// sorted first, so the result does not depend on curve order.
std::vector<double> aggregate(const std::vector<std::vector<double>>& curves, AggregateStat stat);

// Trapezoidal area over the iteration index, divided by the index span when
// `normalized` (so a constant curve c has area c whatever its length).
double area_under_curve(const std::vector<double>& curve, bool normalized = true);

struct EnvEntry {
  std::string name;
  MdpSpec spec;
};

struct CellKey {
  std::string env;
  std::string optimizer;
  std::string policy;
  std::size_t K = 0;
  std::uint64_t seed = 0;

  auto operator<=>(const CellKey&) const = default;
};

// Optional fault injection: a matching cell gets a NaN gradient at `step`.
struct PoisonRule {
  std::optional<std::string> env;
  std::optional<std::string> optimizer;
  std::optional<std::string> policy;
  std::optional<std::size_t> K;
  std::optional<std::uint64_t> seed;
  std::uint64_t step = 0;

  bool matches(const CellKey& key) const;
};

struct SweepConfig {
  std::vector<EnvEntry> envs;
  std::vector<OptimHyper> optimizers;
  std::vector<ResetKind> policies;
  std::vector<std::size_t> K_values;
  std::size_t budget = 0;  // K * T for every cell
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
  std::size_t anchor_episodes = 100;
  std::uint64_t anchor_seed = 0;
  bool auc_normalized = true;
  std::size_t workers = 1;
  std::vector<PoisonRule> poison;

  void validate() const;
};

struct SweepCell {
  CellKey key;
  TrainConfig config;
  const EnvEntry* env = nullptr;
  std::string fingerprint;
};

// Grid in canonical order: env, optimizer, policy, K, seed.
std::vector<SweepCell> enumerate_cells(const SweepConfig& cfg);

struct AucRow {
  std::string optimizer;
  std::string policy;
  std::size_t K = 0;
  double median_auc = 0.0;
  double mean_auc = 0.0;
  std::size_t n_envs = 0;
  std::size_t n_runs = 0;
  std::size_t n_failed = 0;
  bool partial = false;

  friend bool operator==(const AucRow&, const AucRow&) = default;
};

struct CurvePoint {
  std::string env;
  std::string optimizer;
  std::string policy;
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  double raw = 0.0;
  double normalized = 0.0;
};

struct SweepSummary {
  std::vector<CurvePoint> curves;
  std::vector<AucRow> auc;  // sorted by optimizer, policy, K
  std::vector<std::string> warnings;
};

// Normalizes every successful record, averages over seeds per env, then
// takes the median and mean across envs and distills each by its AUC.
SweepSummary summarize(const std::vector<RunRecord>& records,
                       const std::map<std::string, NormalizationAnchors>& anchors, bool auc_normalized = true);

struct SweepResult {
  std::vector<RunRecord> records;  // grid order
  std::map<std::string, NormalizationAnchors> anchors;
  SweepSummary summary;
  std::size_t executed = 0;  // cells run in this invocation
  std::size_t skipped = 0;   // cells reused from an earlier invocation

  std::vector<CellKey> failed_cells() const;
};

using SweepProgress = std::function<void(std::size_t done, std::size_t total, const RunRecord&)>;

// Runs every missing cell with a bounded worker pool and appends each result
// to <dir>/results.jsonl as it completes. Cells whose fingerprint already
// has a successful record are skipped. The file is rewritten in grid order
// at the end, and anchors go to <dir>/anchors.json.
SweepResult run_sweep(const SweepConfig& cfg, const std::filesystem::path& results_dir,
                      const SweepProgress& progress = {});

// File layer.
std::filesystem::path results_file(const std::filesystem::path& dir);
std::filesystem::path anchors_file(const std::filesystem::path& dir);

std::vector<RunRecord> read_results(const std::filesystem::path& dir);
void append_result(const std::filesystem::path& dir, const RunRecord& rec);
void write_results(const std::filesystem::path& dir, const std::vector<RunRecord>& records);

std::map<std::string, NormalizationAnchors> read_anchors(const std::filesystem::path& dir);
// Merges into any anchors already on disk.
void write_anchors(const std::filesystem::path& dir, const std::map<std::string, NormalizationAnchors>& anchors);

// curves.csv columns: env,optimizer,policy,K,seed,iteration,raw,normalized
std::string curves_csv(const SweepSummary& summary);
// auc.csv columns: optimizer,policy,K,median_auc,mean_auc,n_envs,n_runs,n_failed,partial
std::string auc_csv(const SweepSummary& summary);

// Median-AUC table per optimizer: one row per reset policy, one column per K.
std::string median_auc_table(const SweepSummary& summary);

}  // namespace resetopt
