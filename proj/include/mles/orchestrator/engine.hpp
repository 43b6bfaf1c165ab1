#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mles/core/artifact_store.hpp"
#include "mles/core/fingerprint.hpp"
#include "mles/core/hash.hpp"
#include "mles/core/ledger.hpp"
#include "mles/eval/evaluator.hpp"
#include "mles/llm/budget.hpp"
#include "mles/llm/gateway.hpp"
#include "mles/llm/http_endpoint.hpp"
#include "mles/llm/stub_backend.hpp"
#include "mles/operators/prompt.hpp"
#include "mles/operators/response_parser.hpp"
#include "mles/operators/two_stage.hpp"
#include "mles/orchestrator/checkpoint.hpp"
#include "mles/orchestrator/config.hpp"
#include "mles/orchestrator/parallel.hpp"
#include "mles/orchestrator/replay.hpp"
#include "mles/pool/policy_pool.hpp"
#include "mles/pool/rng.hpp"
#include "mles/report/report.hpp"

namespace mles {

struct OperatorCounts {
  std::int64_t requested = 0;
  std::int64_t parsed = 0;
  std::int64_t evaluated = 0;
  std::int64_t admitted = 0;
  std::int64_t skipped = 0;
  std::int64_t llm_failures = 0;
  std::int64_t parse_failures = 0;
  std::int64_t eval_failures = 0;
  bool operator==(const OperatorCounts&) const = default;
};

inline void to_json(json& j, const OperatorCounts& c) {
  j = json{{"requested", c.requested},       {"parsed", c.parsed},
           {"evaluated", c.evaluated},       {"admitted", c.admitted},
           {"skipped", c.skipped},           {"llm_failures", c.llm_failures},
           {"parse_failures", c.parse_failures}, {"eval_failures", c.eval_failures}};
}

struct GenerationSummary {
  std::int64_t generation = 0;
  std::vector<std::pair<OperatorKind, OperatorCounts>> per_operator;
  double best_score = 0.0;
  std::int64_t queries_used = 0;
  std::int64_t resets_used = 0;
  std::int64_t uncharged_resets = 0;
  bool halted = false;
  bool ran = false;  // false when nothing could be scheduled

  [[nodiscard]] OperatorCounts total() const {
    OperatorCounts t;
    for (const auto& [op, c] : per_operator) {
      t.requested += c.requested;
      t.parsed += c.parsed;
      t.evaluated += c.evaluated;
      t.admitted += c.admitted;
      t.skipped += c.skipped;
      t.llm_failures += c.llm_failures;
      t.parse_failures += c.parse_failures;
      t.eval_failures += c.eval_failures;
    }
    return t;
  }
};

inline std::unique_ptr<LlmGateway> make_gateway(const RunConfig& c, const ArtifactStore& store) {
  std::vector<std::unique_ptr<ChatEndpoint>> endpoints;
  if (c.stub_llm) {
    endpoints.push_back(std::make_unique<StubEndpoint>());
  } else {
    for (const auto& e : c.gateway.endpoints) {
      endpoints.push_back(std::make_unique<HttpChatEndpoint>(
          e, [&store](const std::string& ref) { return store.get(ref); }, c.gateway.request_timeout,
          c.gateway.max_image_bytes));
    }
  }
  auto gw = c.gateway;
  gw.query_budget = c.query_budget;
  return std::make_unique<LlmGateway>(std::move(gw), std::move(endpoints));
}

inline std::unique_ptr<EvaluatorPool> make_evaluator_pool(const RunConfig& c) {
  if (c.evaluator.command.empty()) fail(ErrorCode::ConfigError, "evaluator command is not set");
  const auto handshake = std::chrono::milliseconds(static_cast<long long>(c.evaluator.handshake_timeout_seconds * 1000));
  return std::make_unique<EvaluatorPool>(c.evaluator.command, c.evaluator.parallelism, handshake);
}

/// The generational search loop over a run directory.
class SearchEngine {
public:
  SearchEngine(RunConfig config, std::filesystem::path run_dir, LlmGateway& gateway, EvaluatorPool& evaluators)
      : config_((config.validate(), std::move(config))),
        run_dir_(std::move(run_dir)),
        task_(config_.task_spec()),
        templates_(config_.templates_dir.empty() ? PromptTemplates{} : PromptTemplates::from_directory(config_.templates_dir)),
        store_(run_dir_),
        gateway_(gateway),
        evaluators_(evaluators),
        budget_(config_.query_budget, config_.effective_reset_budget()),
        config_hash_(config_hash(config_)) {}

  [[nodiscard]] const RunState& state() const noexcept { return state_; }
  [[nodiscard]] const RunLedger& ledger() const noexcept { return ledger_; }
  [[nodiscard]] const BudgetLedger& budget() const noexcept { return budget_; }
  [[nodiscard]] const RunConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::filesystem::path& run_dir() const noexcept { return run_dir_; }
  [[nodiscard]] ArtifactStore& store() noexcept { return store_; }

  /// Fresh run: truncates the ledger, evaluates the seed policies and writes
  /// the generation-0 checkpoint.
  void start(std::vector<std::string> seed_codes = {}) {
    std::filesystem::create_directories(run_dir_);
    write_file(run_dir_ / "run.toml", config_to_toml(config_));
    ledger_ = RunLedger{};
    ledger_.attach_file(run_dir_ / "ledger.jsonl", true);
    state_ = RunState{};
    state_.pool = PolicyPool(config_.pool_capacity, config_.admit_failed);
    state_.root_seed = config_.seed;

    json ops = json::array();
    for (auto op : config_.operators) ops.push_back(op);
    ledger_.emit(event::run_started, {{"config_hash", config_hash_},
                                      {"task", to_string(config_.task)},
                                      {"seed", config_.seed},
                                      {"pool_capacity", config_.pool_capacity},
                                      {"admit_failed", config_.admit_failed},
                                      {"parents", config_.parents},
                                      {"operators", ops},
                                      {"instance_ids", config_.instance_ids()},
                                      {"query_budget", config_.query_budget},
                                      {"reset_budget", config_.effective_reset_budget()}});
    if (seed_codes.empty()) seed_codes = load_seed_codes();
    initialize_population(seed_codes);
    save_checkpoint();
  }

  /// Restores a checkpoint and truncates the ledger to its recorded length.
  void resume(const std::filesystem::path& checkpoint_file) {
    auto cp = read_checkpoint(checkpoint_file);
    if (cp.config_hash != config_hash_) {
      fail(ErrorCode::ConfigError, "checkpoint " + checkpoint_file.string() + " was written under a different configuration");
    }
    const auto ledger_file = run_dir_ / "ledger.jsonl";
    auto events = load_ledger(ledger_file);
    if (static_cast<std::int64_t>(events.size()) < cp.state.ledger_length) {
      fail(ErrorCode::CorruptCheckpoint, "ledger is shorter than the checkpoint records");
    }
    events.resize(static_cast<std::size_t>(cp.state.ledger_length));
    std::string text;
    for (const auto& e : events) text += e.to_line() + "\n";
    write_file(ledger_file, text);
    write_file(run_dir_ / "run.toml", config_to_toml(config_));

    ledger_ = RunLedger(std::move(events));
    ledger_.attach_file(ledger_file, false);
    state_ = std::move(cp.state);
    state_.halted = false;
    state_.halt_reason.clear();
    budget_.restore(state_.queries_used, state_.resets_used, state_.uncharged_resets);
  }

  /// Generations until a budget or the generation cap stops the run; then a
  /// final checkpoint, the run_finished event and the reports.
  RunState run_search() {
    try {
      std::string reason;
      while (true) {
        if (config_.max_generations && state_.generation >= *config_.max_generations) {
          reason = "max_generations";
          break;
        }
        if (state_.halted) {
          reason = state_.halt_reason;
          break;
        }
        const auto summary = run_generation();
        if (summary.ran && state_.generation % config_.checkpoint_every == 0) save_checkpoint();
      }
      save_checkpoint();
      ledger_.emit(event::run_finished, {{"reason", reason},
                                         {"generation", state_.generation},
                                         {"queries_used", budget_.queries_used()},
                                         {"resets_used", budget_.resets_used()},
                                         {"uncharged_resets", budget_.uncharged_resets()},
                                         {"best_id", state_.pool.empty() ? json(nullptr) : json(state_.pool.best().id)},
                                         {"best_score", state_.pool.empty() ? json(nullptr) : json(state_.pool.best().score())}});
      write_reports(ledger_.events(), run_dir_);
    } catch (...) {
      save_checkpoint();
      throw;
    }
    return state_;
  }

  GenerationSummary run_generation() {
    const auto gen = state_.generation + 1;
    const auto n_instances = static_cast<std::int64_t>(config_.instance_seeds.size());
    std::vector<Invocation> invs;
    bool halted = false;
    std::string halt_reason;
    std::uint64_t route = static_cast<std::uint64_t>(state_.queries_used);
    std::size_t reserved = 0;

    // Sequential: selection on the generation-start snapshot, then reservation.
    for (std::size_t rep = 0; rep < config_.offspring_per_operator && !halted; ++rep) {
      for (std::size_t slot = 0; slot < config_.operators.size(); ++slot) {
        Invocation inv;
        inv.index = invs.size();
        inv.op = config_.operators[slot];
        inv.id = individual_id(gen, inv.index);
        const auto opid = operator_id(inv.op, config_.parents);
        Rng rng(derive_seed(state_.root_seed, {static_cast<std::uint64_t>(gen), slot, rep}));
        inv.parents = select_parents(state_.pool, opid.arity, rng);
        if (opid.uses_ibe != EvidenceUse::none) {
          inv.ibe = select_ibe(inv.parents.front(), opid);
          if (inv.ibe.empty()) {
            inv.skipped = "parent " + inv.parents.front().id + " has no behavioral evidence";
            invs.push_back(std::move(inv));
            continue;
          }
        }
        inv.query_cost = 1 + (opid.two_stage ? static_cast<std::int64_t>(inv.ibe.size()) : 0);
        auto q = budget_.try_reserve(BudgetLedger::Resource::queries, inv.query_cost);
        if (!q) {
          halted = true;
          halt_reason = "query budget exhausted";
          break;
        }
        auto r = budget_.try_reserve(BudgetLedger::Resource::resets, n_instances);
        if (!r) {
          halted = true;
          halt_reason = "reset budget exhausted";
          break;
        }
        inv.queries = std::move(*q);
        inv.resets = std::move(*r);
        inv.route_key = route;
        route += static_cast<std::uint64_t>(inv.query_cost);
        ++reserved;
        invs.push_back(std::move(inv));
      }
    }

    GenerationSummary summary;
    summary.generation = state_.generation;
    if (reserved == 0) {
      state_.halted = true;
      state_.halt_reason = halted ? halt_reason : "no operator could be applied";
      summary.halted = true;
      return summary;
    }

    parallel_for(invs.size(), std::max(config_.gateway.concurrency, evaluators_.size()),
                 [&](std::size_t i) { process(invs[i], gen); });

    // Sequential again: ledger writes in schedule order, then batch admission.
    ledger_.emit(event::generation_started,
                 {{"generation", gen}, {"pool_ids", state_.pool.ids()}, {"best_score", state_.pool.best().score()}});
    std::map<OperatorKind, OperatorCounts> counts;
    std::map<std::string, OperatorKind> op_of;
    std::vector<PolicyIndividual> offspring;
    for (auto& inv : invs) {
      auto& c = counts[inv.op];
      json parent_ids = json::array();
      for (const auto& p : inv.parents) parent_ids.push_back(p.id);
      if (!inv.skipped.empty()) {
        ++c.skipped;
        ledger_.emit(event::invocation_skipped, {{"generation", gen},
                                                 {"invocation", inv.index},
                                                 {"id", inv.id},
                                                 {"operator", inv.op},
                                                 {"parent_ids", parent_ids},
                                                 {"reason", inv.skipped}});
        continue;
      }
      ++c.requested;
      json ibe_refs = json::array();
      for (const auto& r : inv.ibe) ibe_refs.push_back(r.content_ref);
      ledger_.emit(event::llm_request, {{"generation", gen},
                                        {"invocation", inv.index},
                                        {"id", inv.id},
                                        {"operator", inv.op},
                                        {"parent_ids", parent_ids},
                                        {"ibe", ibe_refs},
                                        {"prompt_hash", inv.prompt_hash},
                                        {"k", 1},
                                        {"describe_calls", inv.descriptions.size()},
                                        {"queries", inv.queries_spent},
                                        {"route_key", inv.route_key}});
      if (!inv.llm_error.empty()) {
        ++c.llm_failures;
        ledger_.emit(event::llm_error, {{"id", inv.id}, {"error", inv.llm_error}, {"attempts", inv.attempts}});
        continue;
      }
      ledger_.emit(event::llm_response, {{"id", inv.id},
                                         {"response_hash", sha256_hex(inv.response)},
                                         {"response_ref", inv.response_ref},
                                         {"endpoint", inv.endpoint},
                                         {"attempts", inv.attempts},
                                         {"descriptions", inv.descriptions}});
      if (!inv.child) {
        ++c.parse_failures;
        ledger_.emit(event::parse_failure, {{"id", inv.id}, {"error", inv.parse_error_code}, {"detail", inv.parse_error}});
        continue;
      }
      ++c.parsed;
      ++c.evaluated;
      if (inv.child->metrics->failed()) ++c.eval_failures;
      ledger_.emit(event::candidate_evaluated, {{"individual", *inv.child}});
      op_of[inv.child->id] = inv.op;
      offspring.push_back(std::move(*inv.child));
    }
    if (halted) {
      ledger_.emit(event::budget_halt, {{"generation", gen},
                                        {"reason", halt_reason},
                                        {"queries_remaining", budget_.remaining(BudgetLedger::Resource::queries)},
                                        {"resets_remaining", budget_.remaining(BudgetLedger::Resource::resets)}});
    }

    auto adm = admit_offspring(state_.pool, offspring);
    for (const auto& id : adm.admitted) ++counts[op_of.at(id)].admitted;
    json redundant = json::array();
    for (const auto& id : adm.redundant) {
      const auto it = std::find_if(offspring.begin(), offspring.end(), [&](const auto& o) { return o.id == id; });
      redundant.push_back({{"id", id}, {"fingerprint", it->fingerprint}, {"thought", it->thought}});
    }
    state_.pool = std::move(adm.pool);
    ledger_.emit(event::admission, {{"generation", gen},
                                    {"admitted", adm.admitted},
                                    {"evicted", adm.evicted},
                                    {"redundant", redundant},
                                    {"rejected", adm.rejected},
                                    {"pool_ids", state_.pool.ids()}});

    state_.generation = gen;
    state_.queries_used = budget_.queries_used();
    state_.resets_used = budget_.resets_used();
    state_.uncharged_resets = budget_.uncharged_resets();
    state_.halted = halted;
    state_.halt_reason = halt_reason;

    summary.generation = gen;
    summary.ran = true;
    summary.halted = halted;
    summary.best_score = state_.pool.best().score();
    summary.queries_used = state_.queries_used;
    summary.resets_used = state_.resets_used;
    summary.uncharged_resets = state_.uncharged_resets;
    json per_op = json::object();
    for (auto op : config_.operators) {
      if (counts.count(op) == 0 || per_op.contains(to_string(op))) continue;
      summary.per_operator.emplace_back(op, counts[op]);
      per_op[to_string(op)] = counts[op];
    }
    ledger_.emit(event::generation_end, {{"generation", gen},
                                         {"per_operator", per_op},
                                         {"best_score", summary.best_score},
                                         {"queries_used", summary.queries_used},
                                         {"resets_used", summary.resets_used},
                                         {"uncharged_resets", summary.uncharged_resets},
                                         {"halted", halted}});
    state_.ledger_length = static_cast<std::int64_t>(ledger_.size());
    return summary;
  }

  void save_checkpoint() {
    auto snapshot = state_;
    snapshot.ledger_length = static_cast<std::int64_t>(ledger_.size());
    write_checkpoint(checkpoint_path(run_dir_, state_.generation), {config_hash_, snapshot});
  }

private:
  struct Invocation {
    std::size_t index = 0;
    OperatorKind op = OperatorKind::E1;
    std::string id;
    std::vector<PolicyIndividual> parents;
    std::vector<IBEArtifactRef> ibe;
    std::string skipped;
    std::int64_t query_cost = 0;
    std::int64_t queries_spent = 0;
    BudgetLedger::Grant queries;
    BudgetLedger::Grant resets;
    std::uint64_t route_key = 0;

    std::vector<std::string> descriptions;
    std::string prompt_hash;
    std::string response;
    std::string response_ref;
    std::string endpoint;
    int attempts = 0;
    std::string llm_error;
    std::string parse_error_code;
    std::string parse_error;
    std::optional<PolicyIndividual> child;
  };

  struct Evaluated {
    QuantitativeMetrics metrics;
    std::vector<IBEArtifactRef> ibe;
  };

  static std::string individual_id(std::int64_t generation, std::size_t index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "g%lld-%04zu", static_cast<long long>(generation), index);
    return buf;
  }

  std::vector<std::string> load_seed_codes() const {
    if (config_.seed_policy_files.empty()) return {task_.code_template};
    std::vector<std::string> codes;
    for (const auto& f : config_.seed_policy_files) codes.push_back(read_file(f));
    return codes;
  }

  // The parent's own evidence of the kind the operator consumes, in
  // instance order, capped at ibe_max_images.
  std::vector<IBEArtifactRef> select_ibe(const PolicyIndividual& parent, const OperatorId& op) const {
    std::vector<IBEArtifactRef> out;
    for (const auto& r : parent.ibe) {
      if (r.is_image() == (op.uses_ibe == EvidenceUse::image)) out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    if (out.size() > config_.effective_ibe_max_images()) out.resize(config_.effective_ibe_max_images());
    return out;
  }

  EvalRequest make_request(const std::string& id, const std::string& code) const {
    EvalRequest req;
    req.request_id = id;
    req.kind = RequestKind::evaluate;
    req.task = config_.task;
    req.code = code;
    req.instance_ids = config_.instance_ids();
    req.seeds = config_.instance_seeds;
    req.ibe_kinds = config_.ibe_kinds();
    req.limits = {config_.evaluator.max_steps_per_episode, config_.evaluator.wall_clock_seconds};
    return req;
  }

  // Candidate-level evaluator trouble becomes floor-scored metrics; only
  // losing the evaluator altogether propagates.
  Evaluated evaluate_code(const std::string& id, const std::string& code, BudgetLedger::Grant* resets) {
    const auto req = make_request(id, code);
    auto lease = evaluators_.acquire();
    try {
      auto out = resets != nullptr ? evaluate_policy(*lease, req, *resets) : evaluate_uncharged(*lease, req);
      Evaluated r{out.metrics, {}};
      if (!out.metrics.failed()) r.ibe = store_ibe(out.response.ibe_payloads, store_);
      return r;
    } catch (const Error& e) {
      EvalStatus status;
      switch (e.code()) {
        case ErrorCode::Timeout: status = EvalStatus::timeout; break;
        case ErrorCode::EvaluatorCrashed:
        case ErrorCode::AggregateMismatch: status = EvalStatus::protocol_error; break;
        default: throw;
      }
      QuantitativeMetrics m;
      m.aggregate_score = failure_score(config_.task);
      m.resets_used = static_cast<std::int64_t>(req.instance_ids.size());
      m.status = status;
      m.error_detail = e.what();
      return {m, {}};
    }
  }

  void initialize_population(const std::vector<std::string>& codes) {
    if (codes.empty()) fail(ErrorCode::ConfigError, "at least one seed policy is required");
    std::vector<PolicyIndividual> seeds(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      try {
        require_single_entry_point(codes[i], task_.entry_point);
      } catch (const Error& e) {
        fail(ErrorCode::ConfigError, "seed policy #" + std::to_string(i) + ": " + e.what());
      }
      auto& s = seeds[i];
      s.id = individual_id(0, i);
      s.code = codes[i];
      if (i < config_.seed_policy_files.size()) {
        s.thought = "Seed policy " + std::filesystem::path(config_.seed_policy_files[i]).filename().string() + ".";
      } else {
        s.thought = i == 0 ? "Initial heuristic from the task code template." : "Seed policy #" + std::to_string(i) + ".";
      }
      s.fingerprint = fingerprint(s.code);
      s.origin.generation = 0;
    }
    parallel_for(seeds.size(), evaluators_.size(), [&](std::size_t i) {
      auto r = evaluate_code(seeds[i].id, seeds[i].code, nullptr);
      seeds[i].metrics = std::move(r.metrics);
      seeds[i].ibe = std::move(r.ibe);
    });

    bool any_ok = false;
    for (const auto& s : seeds) {
      budget_.record_uncharged_resets(s.metrics->resets_used);
      any_ok = any_ok || !s.metrics->failed();
      ledger_.emit(event::seed_evaluated, {{"individual", s}});
    }
    if (!any_ok) fail(ErrorCode::AllSeedsFailed, "every seed policy failed evaluation");

    auto adm = admit_offspring(state_.pool, seeds);
    state_.pool = std::move(adm.pool);
    state_.uncharged_resets = budget_.uncharged_resets();
    ledger_.emit(event::population_initialized, {{"admitted", adm.admitted},
                                                 {"evicted", adm.evicted},
                                                 {"redundant", adm.redundant},
                                                 {"rejected", adm.rejected},
                                                 {"pool_ids", state_.pool.ids()},
                                                 {"best_score", state_.pool.best().score()},
                                                 {"uncharged_resets", state_.uncharged_resets}});
    state_.ledger_length = static_cast<std::int64_t>(ledger_.size());
  }

  void process(Invocation& inv, std::int64_t gen) {
    if (!inv.skipped.empty()) return;
    const auto opid = operator_id(inv.op, config_.parents);
    try {
      if (opid.two_stage) {
        inv.descriptions = describe_images(gateway_, task_, inv.ibe, inv.queries, inv.route_key, templates_);
      }
      RenderOptions opts;
      opts.templates = &templates_;
      opts.load_text = [this](const IBEArtifactRef& r) { return store_.get(r.content_ref); };
      opts.descriptions = inv.descriptions;
      const auto bundle = render_prompt(opid, task_, inv.parents, inv.ibe, opts);
      inv.prompt_hash = bundle.content_hash();
      auto slot = gateway_.generate(bundle, 1, inv.queries, inv.route_key + inv.descriptions.size()).front();
      inv.attempts = slot.attempts;
      inv.endpoint = slot.endpoint;
      if (!slot.ok()) {
        inv.llm_error = slot.error;
      } else {
        inv.response = std::move(*slot.text);
      }
    } catch (const Error& e) {
      inv.llm_error = e.what();
    }
    inv.queries_spent = inv.query_cost - inv.queries.held();
    inv.queries.release();
    if (!inv.llm_error.empty()) {
      inv.resets.release();
      return;
    }
    inv.response_ref = store_.put(inv.response, "txt");

    ParsedCandidate parsed;
    std::string fp;
    try {
      parsed = parse_response(opid, inv.response, task_.entry_point);
      require_single_entry_point(parsed.code, task_.entry_point);
      fp = fingerprint(parsed.code);
    } catch (const Error& e) {
      inv.parse_error_code = std::string(to_string(e.code()));
      inv.parse_error = e.what();
      inv.resets.release();
      return;
    }

    auto evaluated = evaluate_code(inv.id, parsed.code, &inv.resets);
    inv.resets.release();
    PolicyIndividual child;
    child.id = inv.id;
    child.code = std::move(parsed.code);
    child.thought = std::move(parsed.thought);
    child.metrics = std::move(evaluated.metrics);
    child.ibe = std::move(evaluated.ibe);
    child.fingerprint = std::move(fp);
    for (const auto& p : inv.parents) child.origin.parent_ids.push_back(p.id);
    child.origin.op = inv.op;
    child.origin.generation = gen;
    child.origin.llm_response_hash = sha256_hex(inv.response);
    inv.child = std::move(child);
  }

  RunConfig config_;
  std::filesystem::path run_dir_;
  TaskSpec task_;
  PromptTemplates templates_;
  ArtifactStore store_;
  LlmGateway& gateway_;
  EvaluatorPool& evaluators_;
  BudgetLedger budget_;
  std::string config_hash_;
  RunLedger ledger_;
  RunState state_;
};

} // namespace mles
