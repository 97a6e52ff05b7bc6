#include "resetopt/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "resetopt/checkpoint.hpp"
#include "resetopt/config.hpp"
#include "resetopt/harness.hpp"
#include "resetopt/training.hpp"

namespace resetopt::cli {

namespace fs = std::filesystem;

namespace {

struct Loaded {
  nlohmann::json root;
  fs::path base_dir;
  fs::path results_dir;
};

// Config file plus overrides; flags win over file values.
Loaded load(const Options& opts) {
  Loaded l;
  l.root = load_config_file(opts.config_path);
  if (!l.root.is_object()) throw ConfigError("config file " + opts.config_path + " must hold a JSON object");
  for (const auto& o : opts.overrides) apply_override(l.root, o);
  if (opts.workers) l.root["workers"] = *opts.workers;
  if (opts.results_dir) l.root["results_dir"] = *opts.results_dir;
  l.base_dir = fs::path(opts.config_path).parent_path();
  l.results_dir = l.root.value("results_dir", std::string("results"));
  return l;
}

std::string fmt(double x, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename Body>
int guarded(std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DegenerateEnvironment& e) {
    log << "error: degenerate environment: " << e.what() << '\n';
    return kDegenerateEnv;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int cmd_train(const Options& opts, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const auto l = load(opts);
    if (!l.root.contains("env")) throw ConfigError("train config needs an 'env' entry");
    const auto env = env_from_json(l.root.at("env"), l.base_dir);
    const auto cfg = train_config_for(l.root, env.spec);

    if (!opts.quiet) {
      log << "train env=" << env.name << " optimizer=" << to_string(cfg.optimizer.kind)
          << " reset=" << to_string(cfg.reset.kind) << " K=" << cfg.K << " T=" << cfg.T << " seed=" << cfg.seed
          << '\n';
    }
    auto result = train(cfg, env.spec, env.name);
    auto& rec = result.record;
    fs::create_directories(l.results_dir);
    append_result(l.results_dir, rec);

    try {
      const auto q_star = value_iteration_oracle(env.spec, 1e-10);
      Rng rng = make_stream(l.root.value("anchor_seed", std::uint64_t{0}), RngStream::eval);
      write_anchors(l.results_dir, {{env.name, compute_anchors(env.spec, q_star,
                                                               l.root.value("anchor_episodes", std::size_t{100}),
                                                               cfg.max_episode_steps, rng)}});
    } catch (const DegenerateEnvironment& e) {
      log << "warning: no normalization anchors for " << env.name << ": " << e.what() << '\n';
    }

    if (l.root.value("checkpoint", true)) {
      const fs::path dir = l.root.value("checkpoint_dir", (l.results_dir / "checkpoints").string());
      fs::create_directories(dir);
      const auto path = dir / (rec.fingerprint + ".ckpt");
      save_checkpoint(path, {network_for(env.spec, cfg).layer_widths, result.agent.theta, result.optimizer});
      if (!opts.quiet) log << "checkpoint " << path.string() << '\n';
    }
    if (!opts.quiet) {
      log << "done in " << fmt(rec.wall_clock_seconds, "%.2f") << "s, final eval return "
          << fmt(rec.eval_returns.back()) << ", fingerprint " << rec.fingerprint << '\n';
    }
    out << rec.fingerprint << '\n';
    return int{kOk};
  });
}

int cmd_sweep(const Options& opts, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const auto l = load(opts);
    const auto cfg = sweep_config_from_json(l.root, l.base_dir);
    const auto total = enumerate_cells(cfg).size();
    if (!opts.quiet) {
      log << "sweep: " << total << " cells, " << cfg.workers << " worker(s), results in " << l.results_dir.string()
          << '\n';
    }
    const auto result = run_sweep(cfg, l.results_dir, [&](std::size_t done, std::size_t pending, const RunRecord& r) {
      if (opts.quiet) return;
      log << "[" << done << "/" << pending << "] env=" << r.env << " opt=" << r.optimizer << " policy=" << r.policy
          << " K=" << r.K << " seed=" << r.seed;
      if (r.failed) {
        log << " FAILED: " << r.error;
      } else {
        log << " " << fmt(r.wall_clock_seconds, "%.2f") << "s";
      }
      log << '\n';
    });
    if (!opts.quiet && result.skipped) log << "reused " << result.skipped << " completed cell(s)\n";
    for (const auto& w : result.summary.warnings) log << "warning: " << w << '\n';
    out << median_auc_table(result.summary);

    const auto failed = result.failed_cells();
    if (!failed.empty()) {
      log << failed.size() << " cell(s) failed:\n";
      for (const auto& k : failed) {
        log << "  env=" << k.env << " optimizer=" << k.optimizer << " policy=" << k.policy << " K=" << k.K
            << " seed=" << k.seed << '\n';
      }
      return int{kPartialSweep};
    }
    return int{kOk};
  });
}

int cmd_oracle(const Options& opts, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const auto l = load(opts);
    if (!l.root.contains("env")) throw ConfigError("oracle config needs an 'env' entry");
    const auto env = env_from_json(l.root.at("env"), l.base_dir);
    const double tol = l.root.value("oracle_tol", 1e-10);
    const auto q_star = value_iteration_oracle(env.spec, tol);

    out << "Q* for " << env.name << " (gamma=" << fmt(env.spec.gamma, "%g") << ")\n";
    out << "state";
    for (std::size_t a = 0; a < env.spec.n_actions; ++a) out << "\ta" << a;
    out << '\n';
    for (std::size_t s = 0; s < env.spec.n_states; ++s) {
      out << s;
      for (double q : q_star[s]) out << '\t' << fmt(q, "%.10f");
      out << '\n';
    }

    const auto max_steps = l.root.value("max_episode_steps", std::size_t{100});
    Rng rng = make_stream(l.root.value("anchor_seed", std::uint64_t{0}), RngStream::eval);
    const auto anchors =
        compute_anchors(env.spec, q_star, l.root.value("anchor_episodes", std::size_t{100}), max_steps, rng);
    out << "optimal return (oracle-greedy, undiscounted): " << fmt(anchors.reference_score, "%.10f") << '\n';
    out << "random-policy return: " << fmt(anchors.random_score, "%.10f") << '\n';
    write_anchors(l.results_dir, {{env.name, anchors}});
    if (!opts.quiet) log << "anchors written to " << anchors_file(l.results_dir).string() << '\n';
    return int{kOk};
  });
}

int cmd_report(const std::string& results_dir, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const fs::path dir = results_dir;
    const auto records = read_results(dir);
    if (records.empty()) throw ConfigError("no results found in " + results_file(dir).string());
    const auto summary = summarize(records, read_anchors(dir));
    for (const auto& w : summary.warnings) log << "warning: " << w << '\n';
    write_text(dir / "curves.csv", curves_csv(summary));
    write_text(dir / "auc.csv", auc_csv(summary));
    out << median_auc_table(summary);
    return int{kOk};
  });
}

int run(int argc, char** argv) {
  CLI::App app{"Optimizer-reset laboratory for value-based deep RL"};
  app.require_subcommand(1);

  Options opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Config file (JSON)")->required();
    sub->add_option("--set", opts.overrides, "Dotted-path override KEY=VALUE (repeatable)");
    sub->add_option("--workers", opts.workers, "Worker threads for sweeps (default: all cores)");
    sub->add_option("--results-dir", opts.results_dir, "Directory for result files");
    sub->add_flag("--quiet", opts.quiet, "Suppress progress output");
  };
  auto* train_cmd = app.add_subcommand("train", "Run one training configuration");
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a K x reset-policy x optimizer x env x seed grid");
  auto* oracle_cmd = app.add_subcommand("oracle", "Solve an environment by value iteration and write anchors");
  add_common(train_cmd);
  add_common(sweep_cmd);
  add_common(oracle_cmd);

  auto* report_cmd = app.add_subcommand("report", "Aggregate results into curves.csv, auc.csv and a table");
  std::string report_dir = "results";
  report_cmd->add_option("--results-dir,dir", report_dir, "Results directory");
  bool report_quiet = false;
  report_cmd->add_flag("--quiet", report_quiet, "Suppress warnings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? int{kOk} : int{kUsageError};
  }

  std::ofstream null_stream;
  if (*train_cmd) return cmd_train(opts, std::cout, std::cerr);
  if (*sweep_cmd) return cmd_sweep(opts, std::cout, std::cerr);
  if (*oracle_cmd) return cmd_oracle(opts, std::cout, std::cerr);
  if (*report_cmd) return cmd_report(report_dir, std::cout, report_quiet ? null_stream : std::cerr);
  return kUsageError;
}

}  // namespace resetopt::cli
