#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>

#include "mles/orchestrator/engine.hpp"
#include "mles/report/ensemble.hpp"
#include "test_support.hpp"

namespace mles {
namespace {

using test::code_of;
namespace fs = std::filesystem;

// ---- configuration ---------------------------------------------------------------------

TEST(Config, ShippedStubConfig) {
  const auto c = load_config(fs::path(MLES_SOURCE_DIR) / "configs" / "lunar_lander_stub.toml");
  EXPECT_TRUE(c.stub_llm);
  EXPECT_TRUE(c.evaluator.stub);
  EXPECT_EQ(c.query_budget, 2000);
  EXPECT_EQ(c.effective_reset_budget(), 10000);
  EXPECT_EQ(c.pool_capacity, 16u);
  EXPECT_EQ(c.instance_seeds.size(), 5u);
  EXPECT_EQ(c.ibe_kinds(), std::vector<IbeKind>{IbeKind::frame_stack_image});
}

TEST(Config, ShippedLiveConfigsParse) {
  for (const auto* name : {"lunar_lander.toml", "car_racing.toml"}) {
    const auto c = load_config(fs::path(MLES_SOURCE_DIR) / "configs" / name);
    EXPECT_FALSE(c.gateway.endpoints.empty()) << name;
  }
  const auto racing = load_config(fs::path(MLES_SOURCE_DIR) / "configs" / "car_racing.toml");
  EXPECT_EQ(racing.task, TaskKind::car_racing);
  EXPECT_EQ(racing.effective_reset_budget(), racing.query_budget * 4);
}

TEST(Config, TomlRoundTrip) {
  auto c = test::stub_config(123);
  c.instance_seeds = {1, 2, 3};
  c.operators = {OperatorKind::E1, OperatorKind::M1_T};
  c.reset_budget = 77;
  c.max_generations = 9;
  c.admit_failed = false;
  EndpointConfig e;
  e.base_url = "https://llm.example/v1";
  e.model_name = "m";
  e.api_key_env_var = "KEY";
  e.supports_images = false;
  c.gateway.endpoints.push_back(e);
  const auto back = parse_config(config_to_toml(c));
  EXPECT_EQ(config_to_toml(back), config_to_toml(c));
  EXPECT_EQ(back.instance_seeds, c.instance_seeds);
  EXPECT_EQ(back.operators, c.operators);
  EXPECT_EQ(back.effective_reset_budget(), 77);
  EXPECT_FALSE(back.admit_failed);
  ASSERT_EQ(back.gateway.endpoints.size(), 1u);
  EXPECT_FALSE(back.gateway.endpoints[0].supports_images);

  // A derived reset budget is not pinned, so it follows a later query budget.
  auto implicit = parse_config(config_to_toml(test::stub_config(32)));
  EXPECT_FALSE(implicit.reset_budget.has_value());
  implicit.query_budget = 48;
  EXPECT_EQ(implicit.effective_reset_budget(), 240);
}

TEST(Config, HashIgnoresBudgetsOnly) {
  auto a = test::stub_config(64);
  auto b = test::stub_config(2000);
  b.max_generations = 3;
  b.reset_budget = 5;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, Errors) {
  EXPECT_EQ(code_of([] { parse_config("[task\nname="); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("[pool]\ncapacity = \"big\"\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("[operators]\noffspring_per_operator = 0\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("[[gateway.endpoints]]\nmodel = \"x\"\n"); }), ErrorCode::ConfigError);
  EXPECT_TRUE(code_of([] { parse_config("[operators]\nenabled = [\"E9\"]\n"); }).has_value());

  RunConfig live;
  EXPECT_EQ(code_of([&] { live.validate(); }), ErrorCode::ConfigError);
  auto c = test::stub_config();
  c.instance_seeds.clear();
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = test::stub_config();
  c.pool_capacity = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = test::stub_config();
  c.query_budget = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  const auto c = parse_config("[task]\nseed_policies = [\"a.py\"]\n", "/etc/runs");
  ASSERT_EQ(c.seed_policy_files.size(), 1u);
  EXPECT_EQ(fs::path(c.seed_policy_files[0]), fs::path("/etc/runs/a.py"));
}

// ---- checkpoints -----------------------------------------------------------------------

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_hash = "abc";
  c.state.pool = PolicyPool(4, true);
  const PolicyIndividual one[] = {test::make_individual("x", 0.5)};
  c.state.pool = admit_offspring(c.state.pool, one).pool;
  c.state.generation = 3;
  c.state.queries_used = 48;
  c.state.resets_used = 240;
  c.state.uncharged_resets = 5;
  c.state.root_seed = 99;
  c.state.ledger_length = 120;
  return c;
}

TEST(Checkpoint, RoundTrip) {
  test::TempDir dir;
  const auto c = sample_checkpoint();
  write_checkpoint(checkpoint_path(dir.path(), 3), c);
  write_checkpoint(checkpoint_path(dir.path(), 12), c);
  const auto back = read_checkpoint(checkpoint_path(dir.path(), 3));
  EXPECT_EQ(back.config_hash, c.config_hash);
  EXPECT_EQ(back.state, c.state);
  EXPECT_EQ(latest_checkpoint(dir.path()), checkpoint_path(dir.path(), 12));
  EXPECT_FALSE(latest_checkpoint(dir / "missing").has_value());
}

TEST(Checkpoint, TamperAndSchema) {
  auto j = checkpoint_to_json(sample_checkpoint());
  auto tampered = j;
  tampered["budget"]["queries_used"] = 1;
  EXPECT_EQ(code_of([&] { checkpoint_from_json(tampered); }), ErrorCode::CorruptCheckpoint);
  auto unhashed = j;
  unhashed.erase("content_hash");
  EXPECT_EQ(code_of([&] { checkpoint_from_json(unhashed); }), ErrorCode::CorruptCheckpoint);
  auto future = j;
  future["schema"] = "mles-checkpoint/2";
  EXPECT_EQ(code_of([&] { checkpoint_from_json(future); }), ErrorCode::SchemaMismatch);
  EXPECT_EQ(code_of([] { checkpoint_from_json(json::array()); }), ErrorCode::CorruptCheckpoint);

  test::TempDir dir;
  write_file(dir / "bad.json", "{ not json");
  EXPECT_EQ(code_of([&] { read_checkpoint(dir / "bad.json"); }), ErrorCode::CorruptCheckpoint);
}

// ---- engine ----------------------------------------------------------------------------

/// Stub responses, except for chosen completion indices that return prose
/// (parse failure) or always fail (LLM failure).
class FaultyStub : public ChatEndpoint {
public:
  FaultyStub(std::set<std::uint64_t> garble, std::set<std::uint64_t> fail)
      : garble_(std::move(garble)), fail_(std::move(fail)) {}
  [[nodiscard]] std::string name() const override { return "faulty"; }
  [[nodiscard]] bool supports_images() const override { return true; }
  std::string complete(const PromptBundle& bundle, const CompletionParams& params) override {
    if (fail_.count(params.completion_index) != 0) mles::fail(ErrorCode::EndpointFailure, "scripted outage");
    if (garble_.count(params.completion_index) != 0) return "I would rather not write code today.";
    return inner_.complete(bundle, params);
  }

private:
  StubEndpoint inner_;
  std::set<std::uint64_t> garble_;
  std::set<std::uint64_t> fail_;
};

/// One engine over its own run directory, with the stub LLM and evaluator.
struct EngineRun {
  explicit EngineRun(RunConfig c, const fs::path& dir, std::unique_ptr<ChatEndpoint> endpoint = nullptr)
      : config(std::move(c)), run_dir(dir), store(dir) {
    if (endpoint) {
      std::vector<std::unique_ptr<ChatEndpoint>> v;
      v.push_back(std::move(endpoint));
      gateway = std::make_unique<LlmGateway>(config.gateway, std::move(v));
    } else {
      gateway = make_gateway(config, store);
    }
    evaluators = make_evaluator_pool(config);
    engine = std::make_unique<SearchEngine>(config, run_dir, *gateway, *evaluators);
  }

  [[nodiscard]] std::string ledger_text() const { return test::slurp(run_dir / "ledger.jsonl"); }

  [[nodiscard]] std::size_t count(const std::string& type) const {
    const auto ev = engine->ledger().events();
    return static_cast<std::size_t>(std::count_if(ev.begin(), ev.end(), [&](const auto& e) { return e.type == type; }));
  }

  RunConfig config;
  fs::path run_dir;
  ArtifactStore store;
  std::unique_ptr<LlmGateway> gateway;
  std::unique_ptr<EvaluatorPool> evaluators;
  std::unique_ptr<SearchEngine> engine;
};

std::string seed_code(int i, const std::string& extra = "") {
  return "def choose_action(s, last_action, s_pre):\n    return " + std::to_string(i % 4) + "  # seed " +
         std::to_string(i) + extra + "\n";
}

TEST(Engine, InitialPopulationIsUncharged) {
  test::TempDir dir;
  EngineRun run(test::stub_config(), dir.path());
  run.engine->start();
  const auto& st = run.engine->state();
  EXPECT_EQ(st.generation, 0);
  EXPECT_EQ(st.pool.size(), 1u);
  EXPECT_EQ(st.queries_used, 0);
  EXPECT_EQ(st.resets_used, 0);
  EXPECT_EQ(st.uncharged_resets, 5);
  EXPECT_EQ(st.pool.best().id, "g0-0000");
  ASSERT_EQ(st.pool.best().ibe.size(), 5u);
  EXPECT_TRUE(fs::exists(checkpoint_path(dir.path(), 0)));
  EXPECT_TRUE(fs::exists(dir / "run.toml"));
  EXPECT_EQ(run.count(event::seed_evaluated), 1u);
  EXPECT_EQ(run.count(event::population_initialized), 1u);
}

TEST(Engine, OneGenerationSpendsSixteenQueries) {
  test::TempDir dir;
  auto c = test::stub_config();
  c.max_generations = 1;
  EngineRun run(c, dir.path());
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_EQ(st.generation, 1);
  EXPECT_EQ(st.queries_used, 16);
  EXPECT_EQ(st.resets_used, 80);
  EXPECT_EQ(run.count(event::llm_request), 16u);
  EXPECT_EQ(run.count(event::candidate_evaluated), 16u);
  EXPECT_LE(st.pool.size(), 16u);

  // Ids follow schedule order; operators cycle inside each repetition.
  std::vector<std::string> ids;
  std::vector<std::string> ops;
  for (const auto& e : run.engine->ledger().events()) {
    if (e.type != event::llm_request) continue;
    ids.push_back(e.data.at("id"));
    ops.push_back(e.data.at("operator"));
  }
  EXPECT_EQ(ids.front(), "g1-0000");
  EXPECT_EQ(ids.back(), "g1-0015");
  EXPECT_EQ((std::vector<std::string>(ops.begin(), ops.begin() + 4)),
            (std::vector<std::string>{"E1", "E2", "M1_M", "M2_M"}));
  const auto finished = run.engine->ledger().events().back();
  EXPECT_EQ(finished.type, event::run_finished);
  EXPECT_EQ(finished.data.at("reason"), "max_generations");
}

TEST(Engine, FailuresReleaseResets) {
  test::TempDir dir;
  auto c = test::stub_config();
  c.max_generations = 1;
  c.gateway.max_retries = 1;
  EngineRun run(c, dir.path(), std::make_unique<FaultyStub>(std::set<std::uint64_t>{2, 5}, std::set<std::uint64_t>{9}));
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_EQ(run.count(event::llm_request), 16u);
  EXPECT_EQ(run.count(event::parse_failure), 2u);
  EXPECT_EQ(run.count(event::llm_error), 1u);
  EXPECT_EQ(run.count(event::candidate_evaluated), 13u);
  EXPECT_EQ(st.queries_used, 16);
  EXPECT_EQ(st.resets_used, 13 * 5);

  const auto events = run.engine->ledger().events();
  const auto& end = *std::find_if(events.begin(), events.end(), [](const auto& e) { return e.type == event::generation_end; });
  const auto& per_op = end.data.at("per_operator");
  EXPECT_EQ(per_op.at("E2").at("parse_failures"), 1);  // invocations 2 and 5 are M1_M and E2
  EXPECT_EQ(per_op.at("M1_M").at("parse_failures"), 1);
  EXPECT_EQ(per_op.at("E2").at("llm_failures"), 1);    // invocation 9
  for (const auto& e : run.engine->ledger().events()) {
    if (e.type != event::llm_error) continue;
    EXPECT_NE(e.data.at("error").get<std::string>().find("after 1 retries"), std::string::npos);
  }
}

TEST(Engine, HaltsWhenQueriesRunOut) {
  test::TempDir dir;
  EngineRun run(test::stub_config(3), dir.path());
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_EQ(st.generation, 1);
  EXPECT_EQ(st.queries_used, 3);
  EXPECT_EQ(st.resets_used, 15);
  EXPECT_TRUE(st.halted);
  EXPECT_EQ(run.count(event::llm_request), 3u);
  EXPECT_EQ(run.count(event::budget_halt), 1u);
  EXPECT_EQ(run.engine->ledger().events().back().data.at("reason"), "query budget exhausted");
}

TEST(Engine, HaltsWhenResetsRunOut) {
  test::TempDir dir;
  auto c = test::stub_config(64);
  c.reset_budget = 22;
  EngineRun run(c, dir.path());
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_EQ(st.resets_used, 20);
  EXPECT_EQ(st.queries_used, 4);
  EXPECT_EQ(run.engine->ledger().events().back().data.at("reason"), "reset budget exhausted");
}

TEST(Engine, BudgetOf64RunsFourGenerations) {
  test::TempDir dir;
  EngineRun run(test::stub_config(64), dir.path());
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_EQ(st.generation, 4);
  EXPECT_EQ(st.queries_used, 64);
  EXPECT_EQ(st.resets_used, 320);
  for (int g = 0; g <= 4; ++g) EXPECT_TRUE(fs::exists(checkpoint_path(dir.path(), g))) << g;
  for (const auto* f : {"convergence.csv", "lineage.json", "lineage.dot", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }

  const auto replayed = replay_ledger(run.engine->ledger().events());
  EXPECT_EQ(replayed.pool, st.pool);
  EXPECT_EQ(replayed.queries_used, 64);
  EXPECT_EQ(replayed.resets_used, 320);
  EXPECT_EQ(replayed.uncharged_resets, 5);
  EXPECT_EQ(replayed.generation, 4);
  EXPECT_EQ(load_ledger(dir / "ledger.jsonl").size(), run.engine->ledger().size());
}

TEST(Engine, RunsAreDeterministic) {
  test::TempDir a;
  test::TempDir b;
  EngineRun ra(test::stub_config(64), a.path());
  EngineRun rb(test::stub_config(64), b.path());
  ra.engine->start();
  rb.engine->start();
  const auto sa = ra.engine->run_search();
  const auto sb = rb.engine->run_search();
  EXPECT_EQ(ra.ledger_text(), rb.ledger_text());
  EXPECT_EQ(sa.pool, sb.pool);

  test::TempDir c;
  auto other = test::stub_config(64);
  other.seed = 8;
  EngineRun rc(other, c.path());
  rc.engine->start();
  rc.engine->run_search();
  EXPECT_NE(ra.ledger_text(), rc.ledger_text());
}

TEST(Engine, ResumeMatchesUninterruptedRun) {
  test::TempDir full_dir;
  EngineRun full(test::stub_config(64), full_dir.path());
  full.engine->start();
  const auto full_state = full.engine->run_search();

  test::TempDir dir;
  {
    auto c = test::stub_config(64);
    c.max_generations = 2;
    EngineRun part(c, dir.path());
    part.engine->start();
    part.engine->run_search();
  }
  EngineRun resumed(test::stub_config(64), dir.path());
  resumed.engine->resume(checkpoint_path(dir.path(), 2));
  const auto st = resumed.engine->run_search();
  EXPECT_EQ(st.pool, full_state.pool);
  EXPECT_EQ(st.queries_used, 64);
  EXPECT_EQ(resumed.ledger_text(), full.ledger_text());
}

TEST(Engine, ResumeWithLargerBudgetContinues) {
  test::TempDir dir;
  {
    EngineRun first(test::stub_config(32), dir.path());
    first.engine->start();
    EXPECT_EQ(first.engine->run_search().generation, 2);
  }
  EngineRun more(test::stub_config(64), dir.path());
  more.engine->resume(*latest_checkpoint(dir.path()));
  EXPECT_FALSE(more.engine->state().halted);
  const auto st = more.engine->run_search();
  EXPECT_EQ(st.generation, 4);
  EXPECT_EQ(st.queries_used, 64);
}

TEST(Engine, ResumeOfFinishedRunIsIdentity) {
  test::TempDir dir;
  std::string before;
  {
    EngineRun run(test::stub_config(64), dir.path());
    run.engine->start();
    run.engine->run_search();
    before = run.ledger_text();
  }
  EngineRun again(test::stub_config(64), dir.path());
  again.engine->resume(*latest_checkpoint(dir.path()));
  again.engine->run_search();
  EXPECT_EQ(again.ledger_text(), before);
}

TEST(Engine, ResumeRejectsOtherConfiguration) {
  test::TempDir dir;
  {
    EngineRun run(test::stub_config(16), dir.path());
    run.engine->start();
    run.engine->run_search();
  }
  auto other = test::stub_config(16);
  other.seed = 1234;
  EngineRun run(other, dir.path());
  EXPECT_EQ(code_of([&] { run.engine->resume(checkpoint_path(dir.path(), 1)); }), ErrorCode::ConfigError);

  auto cp = read_checkpoint(checkpoint_path(dir.path(), 1));
  cp.state.ledger_length = 100000;
  write_checkpoint(dir / "long.json", cp);
  EngineRun same(test::stub_config(16), dir.path());
  EXPECT_EQ(code_of([&] { same.engine->resume(dir / "long.json"); }), ErrorCode::CorruptCheckpoint);
}

TEST(Engine, SeedCounts) {
  for (int n : {1, 3, 20}) {
    test::TempDir dir;
    auto c = test::stub_config(16);
    c.max_generations = 1;
    EngineRun run(c, dir.path());
    std::vector<std::string> codes;
    for (int i = 0; i < n; ++i) codes.push_back(seed_code(i, n == 3 && i == 1 ? " STUB_CRASH" : ""));
    run.engine->start(codes);
    const auto& st = run.engine->state();
    EXPECT_EQ(st.pool.size(), static_cast<std::size_t>(std::min(n, 16))) << n;
    EXPECT_EQ(st.uncharged_resets, 5 * n) << n;
    if (n == 3) {
      const auto crashed = std::find_if(st.pool.members().begin(), st.pool.members().end(),
                                        [](const auto& m) { return m.individual.id == "g0-0001"; });
      ASSERT_NE(crashed, st.pool.members().end());
      EXPECT_EQ(crashed->individual.metrics->status, EvalStatus::protocol_error);
      EXPECT_EQ(crashed->individual.score(), -1.0);
      EXPECT_EQ(st.pool.at_rank(3).id, "g0-0001");
    }
    // M-operators whose drawn parent has no evidence are skipped, not charged.
    const auto after = run.engine->run_search();
    EXPECT_EQ(after.queries_used + static_cast<std::int64_t>(run.count(event::invocation_skipped)), 16) << n;
    EXPECT_EQ(static_cast<std::int64_t>(run.count(event::llm_request)), after.queries_used) << n;
    if (n != 3) {
      EXPECT_EQ(run.count(event::invocation_skipped), 0u) << n;
    }
  }
}

TEST(Engine, AllSeedsFailing) {
  test::TempDir dir;
  EngineRun run(test::stub_config(16), dir.path());
  EXPECT_EQ(code_of([&] { run.engine->start({seed_code(0, "\n    raise ValueError()"), seed_code(1, "\n    raise KeyError()")}); }),
            ErrorCode::AllSeedsFailed);
}

TEST(Engine, RejectsMalformedSeed) {
  test::TempDir dir;
  EngineRun run(test::stub_config(16), dir.path());
  EXPECT_EQ(code_of([&] { run.engine->start({"x = 1\n"}); }), ErrorCode::ConfigError);
}

TEST(Engine, SeedPolicyFiles) {
  test::TempDir dir;
  write_file(dir / "a.py", seed_code(1));
  write_file(dir / "b.py", seed_code(2));
  auto c = test::stub_config(16);
  c.seed_policy_files = {(dir / "a.py").string(), (dir / "b.py").string()};
  EngineRun run(c, dir / "run");
  run.engine->start();
  EXPECT_EQ(run.engine->state().pool.size(), 2u);
  for (const auto& m : run.engine->state().pool.members()) {
    EXPECT_NE(m.individual.thought.find(".py"), std::string::npos);
  }
}

TEST(Engine, DiscoveredPoliciesSeedBothTasks) {
  const fs::path fixtures = fs::path(MLES_SOURCE_DIR) / "tests" / "fixtures";
  const std::pair<TaskKind, const char*> cases[] = {{TaskKind::lunar_lander, "lunar_lander_discovered.py"},
                                                    {TaskKind::car_racing, "car_racing_discovered.py"}};
  for (const auto& [task, file] : cases) {
    test::TempDir dir;
    auto c = test::stub_config(16);
    c.task = task;
    c.instance_seeds = default_instance_seeds(task);
    c.seed_policy_files = {(fixtures / file).string()};
    EngineRun run(c, dir.path());
    run.engine->start();
    const auto& best = run.engine->state().pool.best();
    EXPECT_EQ(best.code, test::slurp(fixtures / file));
    EXPECT_EQ(best.metrics->status, EvalStatus::ok) << file;
    EXPECT_EQ(best.metrics->per_instance.size(), c.instance_seeds.size());
    EXPECT_EQ(run.engine->run_search().queries_used, 16) << file;
  }
}

TEST(Engine, TextEvidenceOperators) {
  test::TempDir dir;
  auto c = test::stub_config(40);
  c.operators = {OperatorKind::M1_T, OperatorKind::M1_M_TWOSTAGE, OperatorKind::M1_M_NOINSTR};
  EngineRun run(c, dir.path());
  run.engine->start();
  const auto st = run.engine->run_search();
  EXPECT_LE(st.queries_used, 40);
  EXPECT_GT(st.generation, 0);
  // Two-stage operators pay one description per image plus the generation.
  for (const auto& e : run.engine->ledger().events()) {
    if (e.type != event::llm_request) continue;
    const auto op = e.data.at("operator").get<std::string>();
    const auto expected = op == "M1_M_TWOSTAGE" ? 1 + static_cast<std::int64_t>(e.data.at("ibe").size()) : 1;
    EXPECT_EQ(e.data.at("queries").get<std::int64_t>(), expected) << op;
  }
}

// ---- reports ---------------------------------------------------------------------------

class ReportFixture : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir();
    EngineRun run(test::stub_config(64), dir_->path());
    run.engine->start();
    run.engine->run_search();
    events_ = new std::vector<LedgerEvent>(run.engine->ledger().events());
  }
  static void TearDownTestSuite() {
    delete events_;
    delete dir_;
  }
  static test::TempDir* dir_;
  static std::vector<LedgerEvent>* events_;
};
test::TempDir* ReportFixture::dir_ = nullptr;
std::vector<LedgerEvent>* ReportFixture::events_ = nullptr;

TEST_F(ReportFixture, ConvergenceIsMonotone) {
  const auto series = convergence_series(*events_);
  ASSERT_EQ(series.size(), 4u);
  for (std::size_t i = 0; i < series.size(); ++i) {
    EXPECT_EQ(series[i].generation, static_cast<std::int64_t>(i + 1));
    EXPECT_EQ(series[i].cumulative_resets, static_cast<std::int64_t>(80 * (i + 1)));
    if (i > 0) {
      EXPECT_GE(series[i].best_score, series[i - 1].best_score);
    }
  }
  const auto csv = convergence_csv(*events_);
  EXPECT_EQ(csv.rfind("generation,cumulative_resets,best_score\n1,80,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(ReportFixture, ConvergenceSkipsIdleGenerations) {
  std::vector<LedgerEvent> ev;
  auto end = [&](int g, int resets, double best) {
    LedgerEvent e;
    e.type = event::generation_end;
    e.data = {{"generation", g}, {"resets_used", resets}, {"best_score", best}};
    ev.push_back(e);
  };
  end(1, 80, 0.1);
  end(2, 80, 0.1);
  end(3, 85, 0.2);
  const auto s = convergence_series(ev);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].generation, 3);
}

TEST_F(ReportFixture, LineageIsRootedAtSeeds) {
  const auto lineage = lineage_json(*events_);
  std::set<std::string> nodes;
  std::set<std::string> roots;
  for (const auto& n : lineage.at("nodes")) {
    nodes.insert(n.at("id").get<std::string>());
    if (n.at("generation") == 0) roots.insert(n.at("id").get<std::string>());
    EXPECT_LE(n.at("thought").get<std::string>().size(), kThoughtExcerpt);
  }
  EXPECT_EQ(roots, std::set<std::string>{"g0-0000"});
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& e : lineage.at("edges")) {
    const auto from = e.at("from").get<std::string>();
    const auto to = e.at("to").get<std::string>();
    ASSERT_TRUE(nodes.count(from) && nodes.count(to));
    children[from].push_back(to);
  }
  std::set<std::string> seen = roots;
  std::vector<std::string> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    for (const auto& c : children[id]) {
      if (seen.insert(c).second) stack.push_back(c);
    }
  }
  EXPECT_EQ(seen, nodes);
  EXPECT_GT(nodes.size(), 1u);

  const auto dot = lineage_dot(lineage);
  EXPECT_EQ(dot.rfind("digraph lineage {", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(dot.begin(), dot.end(), '\n')),
            4 + lineage.at("nodes").size() + lineage.at("edges").size());
}

TEST_F(ReportFixture, SummaryAndFiles) {
  const auto s = summary_json(*events_);
  EXPECT_EQ(s.at("generations"), 4);
  EXPECT_EQ(s.at("budget").at("queries_used"), 64);
  EXPECT_EQ(s.at("budget").at("resets_used"), 320);
  EXPECT_EQ(s.at("budget").at("query_budget"), 64);
  EXPECT_EQ(s.at("task"), "lunar_lander");
  EXPECT_EQ(s.at("finish_reason"), "query budget exhausted");
  EXPECT_TRUE(s.contains("best"));

  test::TempDir out;
  write_reports(*events_, out.path());
  EXPECT_EQ(test::slurp(out / "convergence.csv"), test::slurp(dir_->path() / "convergence.csv"));
  EXPECT_EQ(json::parse(test::slurp(out / "summary.json")), s);
}

TEST(Report, ExcerptRespectsUtf8) {
  std::string t(kThoughtExcerpt - 1, 'a');
  t += "\xC3\xA9";  // two-byte character straddling the cut
  t += "tail";
  const auto e = excerpt(t);
  EXPECT_EQ(e.size(), kThoughtExcerpt - 1);
  EXPECT_EQ(excerpt("short"), "short");
  EXPECT_EQ(dot_escape("a\"b\\c\nd"), "a\\\"b\\\\c\\nd");
}

// ---- command line ----------------------------------------------------------------------

std::string cli() { return std::string(MLES_CLI_PATH); }

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  const auto stub_cfg = std::string(MLES_SOURCE_DIR) + "/configs/lunar_lander_stub.toml";

  write_file(dir / "live.toml",
             "[gateway]\n[[gateway.endpoints]]\nbase_url = \"https://llm.example/v1\"\nmodel = \"m\"\n"
             "api_key_env = \"MLES_TEST_KEY_THAT_IS_NOT_SET\"\n[evaluator]\nstub = true\n");
  EXPECT_EQ(test::run_command(cli() + " run -c " + (dir / "live.toml").string() + " -d " + (dir / "r1").string()), 2);

  EXPECT_EQ(test::run_command(cli() + " run -c " + stub_cfg + " -d " + (dir / "r2").string() + " --reset-budget 3"), 3);
  EXPECT_EQ(test::run_command(cli() + " run -c " + stub_cfg + " -d " + (dir / "r3").string() + " --query-budget 0"), 2);

  write_file(dir / "noeval.toml", "[gateway]\nstub = true\n[evaluator]\ncommand = [\"/nonexistent/evaluator\"]\n");
  EXPECT_EQ(test::run_command(cli() + " run -c " + (dir / "noeval.toml").string() + " -d " + (dir / "r4").string()), 4);

  EXPECT_EQ(test::run_command(cli() + " bogus"), 2);
  fs::create_directories(dir / "empty");
  write_file(dir / "empty" / "run.toml", test::slurp(stub_cfg));
  EXPECT_EQ(test::run_command(cli() + " resume -d " + (dir / "empty").string()), 2);
}

TEST(Cli, RunResumeReportEnsemble) {
  test::TempDir dir;
  const auto run_dir = (dir / "run").string();
  const auto stub_cfg = std::string(MLES_SOURCE_DIR) + "/configs/lunar_lander_stub.toml";
  ASSERT_EQ(test::run_command(cli() + " run -c " + stub_cfg + " -d " + run_dir + " --query-budget 32"), 0);
  const auto ledger = test::slurp(fs::path(run_dir) / "ledger.jsonl");
  ASSERT_EQ(test::run_command(cli() + " resume -d " + run_dir + " --query-budget 48 --stub-llm --stub-eval"), 0);
  EXPECT_EQ(read_checkpoint(*latest_checkpoint(run_dir)).state.queries_used, 48);
  EXPECT_GT(test::slurp(fs::path(run_dir) / "ledger.jsonl").size(), ledger.size());

  ASSERT_EQ(test::run_command(cli() + " report -d " + run_dir + " -o " + (dir / "rep").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "rep" / "lineage.dot"));

  ASSERT_EQ(test::run_command(cli() + " ensemble -d " + run_dir + " --stub-eval --seeds 1 2 3"), 0);
  const auto scores = json::parse(test::slurp(fs::path(run_dir) / "ensemble_scores.json"));
  EXPECT_EQ(scores.at("per_seed").size(), 3u);
  EXPECT_EQ(scores.at("status"), "ok");

  write_file(*latest_checkpoint(run_dir), "{\"schema\": \"mles-checkpoint/1\"}");
  EXPECT_EQ(test::run_command(cli() + " resume -d " + run_dir + " --stub-llm --stub-eval"), 2);
}

} // namespace
} // namespace mles
