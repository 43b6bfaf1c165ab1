#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "mles/orchestrator/engine.hpp"
#include "mles/report/ensemble.hpp"
#include "mles/report/report.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kBudget = 3, kEvaluator = 4 };

int exit_code(mles::ErrorCode code) {
  switch (code) {
    case mles::ErrorCode::ConfigError:
    case mles::ErrorCode::SchemaMismatch:
    case mles::ErrorCode::CorruptCheckpoint: return kConfig;
    case mles::ErrorCode::BudgetExhausted: return kBudget;
    case mles::ErrorCode::EvaluatorUnavailable: return kEvaluator;
    default: return kFailure;
  }
}

std::vector<std::string> stub_evaluator_command() {
  const auto self = fs::read_symlink("/proc/self/exe");
  return {(self.parent_path() / "mles-stub-eval").string(), "--stub"};
}

struct Overrides {
  bool stub_llm = false;
  bool stub_eval = false;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> query_budget;
  std::optional<std::int64_t> reset_budget;
  std::optional<std::int64_t> max_generations;
  std::optional<std::int64_t> checkpoint_every;

  void add_to(CLI::App* cmd, bool search_options) {
    cmd->add_flag("--stub-llm", stub_llm, "Use the deterministic offline LLM backend");
    cmd->add_flag("--stub-eval", stub_eval, "Use the stub evaluator instead of the configured command");
    cmd->add_option("--query-budget", query_budget, "Override budgets.queries");
    cmd->add_option("--reset-budget", reset_budget, "Override budgets.resets");
    cmd->add_option("--max-generations", max_generations, "Stop after this many generations");
    cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in generations");
    if (search_options) cmd->add_option("--seed", seed, "Override run.seed");
  }

  void apply(mles::RunConfig& c) const {
    if (stub_llm) c.stub_llm = true;
    if (stub_eval) c.evaluator.stub = true;
    if (c.evaluator.stub) c.evaluator.command = stub_evaluator_command();
    if (seed) c.seed = static_cast<std::uint64_t>(*seed);
    if (query_budget) {
      c.query_budget = *query_budget;
      c.gateway.query_budget = *query_budget;
    }
    if (reset_budget) c.reset_budget = *reset_budget;
    if (max_generations) c.max_generations = *max_generations;
    if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
  }
};

void require_affordable(const mles::RunConfig& c, std::int64_t queries_used, std::int64_t resets_used) {
  const auto n = static_cast<std::int64_t>(c.instance_seeds.size());
  if (c.query_budget - queries_used < 1 || c.effective_reset_budget() - resets_used < n) {
    mles::fail(mles::ErrorCode::BudgetExhausted,
               "budget cannot pay for a single candidate (" + std::to_string(c.query_budget - queries_used) +
                   " queries, " + std::to_string(c.effective_reset_budget() - resets_used) + " resets left)");
  }
}

void print_outcome(const mles::SearchEngine& engine) {
  const auto& st = engine.state();
  std::printf("generations=%lld queries=%lld resets=%lld best=%s score=%.6f\n", static_cast<long long>(st.generation),
              static_cast<long long>(st.queries_used), static_cast<long long>(st.resets_used),
              st.pool.best().id.c_str(), st.pool.best().score());
}

int cmd_run(const fs::path& config_path, const fs::path& run_dir, const Overrides& o) {
  auto config = mles::load_config(config_path);
  o.apply(config);
  config.validate();
  require_affordable(config, 0, 0);
  mles::ArtifactStore store(run_dir);
  auto gateway = mles::make_gateway(config, store);
  auto evaluators = mles::make_evaluator_pool(config);
  mles::SearchEngine engine(config, run_dir, *gateway, *evaluators);
  engine.start();
  engine.run_search();
  print_outcome(engine);
  return kOk;
}

int cmd_resume(const fs::path& run_dir, const std::string& checkpoint, const Overrides& o) {
  auto config = mles::load_config(run_dir / "run.toml");
  o.apply(config);
  config.validate();
  fs::path cp = checkpoint;
  if (cp.empty()) {
    const auto latest = mles::latest_checkpoint(run_dir);
    if (!latest) mles::fail(mles::ErrorCode::ConfigError, "no checkpoint in " + run_dir.string());
    cp = *latest;
  }
  const auto saved = mles::read_checkpoint(cp);
  require_affordable(config, saved.state.queries_used, saved.state.resets_used);
  mles::ArtifactStore store(run_dir);
  auto gateway = mles::make_gateway(config, store);
  auto evaluators = mles::make_evaluator_pool(config);
  mles::SearchEngine engine(config, run_dir, *gateway, *evaluators);
  engine.resume(cp);
  engine.run_search();
  print_outcome(engine);
  return kOk;
}

int cmd_report(const fs::path& run_dir, const fs::path& out_dir) {
  const auto events = mles::load_ledger(run_dir / "ledger.jsonl");
  mles::write_reports(events, out_dir.empty() ? run_dir : out_dir);
  return kOk;
}

int cmd_ensemble(const fs::path& run_dir, const std::vector<std::int64_t>& seeds, const fs::path& out,
                 const Overrides& o) {
  auto config = mles::load_config(run_dir / "run.toml");
  o.apply(config);
  const auto st = mles::replay_ledger(mles::load_ledger(run_dir / "ledger.jsonl"));
  if (st.pool.empty()) mles::fail(mles::ErrorCode::EmptyPool, "final pool is empty");
  std::vector<std::string> codes;
  for (const auto& m : st.pool.members()) codes.push_back(m.individual.code);

  mles::EvaluatorHandle handle(config.evaluator.command);
  const auto result = mles::run_ensemble(handle, config.task, codes, seeds,
                                         {config.evaluator.max_steps_per_episode, config.evaluator.wall_clock_seconds});
  const auto path = out.empty() ? run_dir / "ensemble_scores.json" : out;
  mles::write_file(path, mles::ensemble_to_json(result).dump(2) + "\n");
  for (const auto& [seed, score] : result.per_seed) std::printf("seed %lld: %.6f\n", static_cast<long long>(seed), score);
  std::printf("mean: %.6f\n", result.mean);
  return result.status == mles::EvalStatus::ok ? kOk : kFailure;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary search for programmatic control policies"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::string checkpoint;
  std::string out;
  std::vector<std::int64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Overrides run_o;
  Overrides resume_o;
  Overrides ens_o;

  auto* run = app.add_subcommand("run", "Start a new search");
  run->add_option("-c,--config", config_path, "run.toml")->required()->check(CLI::ExistingFile);
  run->add_option("-d,--run-dir", run_dir, "Run directory")->required();
  run_o.add_to(run, true);

  auto* resume = app.add_subcommand("resume", "Continue a search from a checkpoint");
  resume->add_option("-d,--run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  resume->add_option("--checkpoint", checkpoint, "Checkpoint file (default: latest)");
  resume_o.add_to(resume, false);

  auto* report = app.add_subcommand("report", "Write convergence, lineage and summary reports from the ledger");
  report->add_option("-d,--run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("-o,--out", out, "Output directory (default: the run directory)");

  auto* ensemble = app.add_subcommand("ensemble", "Evaluate the final pool as a voting ensemble");
  ensemble->add_option("-d,--run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  ensemble->add_option("--seeds", seeds, "Test instance seeds");
  ensemble->add_option("-o,--out", out, "Scores file (default: <run-dir>/ensemble_scores.json)");
  ensemble->add_flag("--stub-eval", ens_o.stub_eval, "Use the stub evaluator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*run) return cmd_run(config_path, run_dir, run_o);
    if (*resume) return cmd_resume(run_dir, checkpoint, resume_o);
    if (*report) return cmd_report(run_dir, out);
    if (*ensemble) return cmd_ensemble(run_dir, seeds, out, ens_o);
  } catch (const mles::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
