#pragma once

#include <toml.hpp>

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mles/core/artifact_store.hpp"
#include "mles/core/error.hpp"
#include "mles/core/hash.hpp"
#include "mles/core/types.hpp"
#include "mles/llm/gateway.hpp"
#include "mles/operators/operator_id.hpp"
#include "mles/operators/task_spec.hpp"

namespace mles {

inline std::vector<std::int64_t> default_instance_seeds(TaskKind task) {
  if (task == TaskKind::lunar_lander) return {42, 123, 256, 777, 2024};
  return {11, 22, 33, 44};
}

struct EvaluatorSettings {
  std::vector<std::string> command;
  std::size_t parallelism = 4;
  std::int64_t max_steps_per_episode = 1000;
  double wall_clock_seconds = 60.0;
  double handshake_timeout_seconds = 60.0;
  bool stub = false;
};

struct RunConfig {
  TaskKind task = TaskKind::lunar_lander;
  std::string description_file;    // empty: built-in text
  std::string code_template_file;  // empty: built-in template
  std::vector<std::int64_t> instance_seeds = default_instance_seeds(TaskKind::lunar_lander);
  std::vector<std::string> seed_policy_files;  // empty: the code template itself

  std::size_t pool_capacity = 16;
  std::size_t parents = 2;
  bool admit_failed = true;

  std::vector<OperatorKind> operators{OperatorKind::E1, OperatorKind::E2, OperatorKind::M1_M, OperatorKind::M2_M};
  std::size_t offspring_per_operator = 4;
  std::optional<std::size_t> ibe_max_images;
  std::string templates_dir;

  GatewayConfig gateway;
  bool stub_llm = false;

  std::int64_t query_budget = 2000;
  std::optional<std::int64_t> reset_budget;

  EvaluatorSettings evaluator;

  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1;
  std::optional<std::int64_t> max_generations;

  [[nodiscard]] std::vector<std::string> instance_ids() const {
    std::vector<std::string> ids;
    for (auto s : instance_seeds) ids.push_back("seed-" + std::to_string(s));
    return ids;
  }

  // One episode per instance per candidate: 2000 queries x 5 instances = 10,000.
  [[nodiscard]] std::int64_t effective_reset_budget() const {
    return reset_budget.value_or(query_budget * static_cast<std::int64_t>(instance_seeds.size()));
  }

  [[nodiscard]] std::size_t effective_ibe_max_images() const {
    return ibe_max_images.value_or(instance_seeds.size());
  }

  /// Evidence kinds every evaluation requests, so that any pool member can
  /// later serve as a parent for the enabled operators.
  [[nodiscard]] std::vector<IbeKind> ibe_kinds() const {
    bool image = false;
    bool text = false;
    for (auto op : operators) {
      const auto id = operator_id(op, parents);
      image = image || id.uses_ibe == EvidenceUse::image;
      text = text || id.uses_ibe == EvidenceUse::text;
    }
    std::vector<IbeKind> kinds;
    if (image) kinds.push_back(builtin_task(task).image_evidence);
    if (text) kinds.push_back(IbeKind::text_state_trace);
    return kinds;
  }

  void validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::ConfigError, what); };
    if (query_budget <= 0) bad("budgets.queries must be positive");
    if (effective_reset_budget() <= 0) bad("budgets.resets must be positive");
    if (operators.empty()) bad("operators.enabled must not be empty");
    if (offspring_per_operator == 0) bad("operators.offspring_per_operator must be positive");
    if (pool_capacity == 0) bad("pool.capacity must be positive");
    if (parents == 0) bad("pool.parents must be positive");
    if (instance_seeds.empty()) bad("task.instance_seeds must not be empty");
    if (checkpoint_every <= 0) bad("run.checkpoint_every must be positive");
    if (evaluator.parallelism == 0) bad("evaluator.parallelism must be positive");
    if (evaluator.max_steps_per_episode <= 0 || !(evaluator.wall_clock_seconds > 0)) {
      bad("evaluator limits must be positive");
    }
    if (!stub_llm && gateway.endpoints.empty()) bad("gateway needs at least one endpoint (or --stub-llm)");
    if (!evaluator.stub && evaluator.command.empty()) bad("evaluator.command must be set (or --stub-eval)");
    if (gateway.concurrency == 0) bad("gateway.concurrency must be positive");
  }

  /// Task with any configured description/template overrides applied.
  [[nodiscard]] TaskSpec task_spec() const {
    auto t = builtin_task(task);
    auto strip = [](std::string s) {
      while (!s.empty() && s.back() == '\n') s.pop_back();
      return s;
    };
    if (!description_file.empty()) t.task_description = strip(read_file(description_file));
    if (!code_template_file.empty()) t.code_template = strip(read_file(code_template_file));
    return t;
  }
};

namespace detail {

template <typename T>
std::optional<T> get(const toml::table& t, std::string_view section, std::string_view key) {
  const auto node = t[section][key];
  if (!node) return std::nullopt;
  if (auto v = node.value<T>()) return v;
  fail(ErrorCode::ConfigError, std::string(section) + "." + std::string(key) + " has the wrong type");
}

template <typename T>
std::optional<std::vector<T>> get_list(const toml::table& t, std::string_view section, std::string_view key) {
  const auto node = t[section][key];
  if (!node) return std::nullopt;
  const auto* arr = node.as_array();
  if (arr == nullptr) fail(ErrorCode::ConfigError, std::string(section) + "." + std::string(key) + " must be an array");
  std::vector<T> out;
  for (const auto& el : *arr) {
    auto v = el.template value<T>();
    if (!v) fail(ErrorCode::ConfigError, std::string(section) + "." + std::string(key) + " has an element of the wrong type");
    out.push_back(*v);
  }
  return out;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

} // namespace detail

/// Parses run.toml text. Relative file paths are resolved against `base_dir`.
inline RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "run.toml: " << e.description() << " at line " << e.source().begin.line;
    fail(ErrorCode::ConfigError, msg.str());
  }
  using detail::get;
  using detail::get_list;
  RunConfig c;
  if (auto v = get<std::string>(t, "task", "name")) {
    c.task = parse_task_kind(*v);
    c.instance_seeds = default_instance_seeds(c.task);
  }
  if (auto v = get<std::string>(t, "task", "description_file")) c.description_file = detail::resolve(base_dir, *v);
  if (auto v = get<std::string>(t, "task", "code_template_file")) c.code_template_file = detail::resolve(base_dir, *v);
  if (auto v = get_list<std::int64_t>(t, "task", "instance_seeds")) c.instance_seeds = *v;
  if (auto v = get_list<std::string>(t, "task", "seed_policies")) {
    for (const auto& p : *v) c.seed_policy_files.push_back(detail::resolve(base_dir, p));
  }

  if (auto v = get<std::int64_t>(t, "pool", "capacity")) c.pool_capacity = static_cast<std::size_t>(*v);
  if (auto v = get<std::int64_t>(t, "pool", "parents")) c.parents = static_cast<std::size_t>(*v);
  if (auto v = get<bool>(t, "pool", "admit_failed")) c.admit_failed = *v;

  if (auto v = get_list<std::string>(t, "operators", "enabled")) {
    c.operators.clear();
    for (const auto& name : *v) c.operators.push_back(parse_operator(name));
  }
  if (auto v = get<std::int64_t>(t, "operators", "offspring_per_operator")) {
    if (*v <= 0) fail(ErrorCode::ConfigError, "operators.offspring_per_operator must be positive");
    c.offspring_per_operator = static_cast<std::size_t>(*v);
  }
  if (auto v = get<std::int64_t>(t, "operators", "ibe_max_images")) c.ibe_max_images = static_cast<std::size_t>(*v);
  if (auto v = get<std::string>(t, "operators", "templates_dir")) c.templates_dir = detail::resolve(base_dir, *v);

  if (auto v = get<double>(t, "gateway", "temperature")) c.gateway.temperature = *v;
  if (auto v = get<std::int64_t>(t, "gateway", "max_retries")) c.gateway.max_retries = static_cast<int>(*v);
  if (auto v = get<std::int64_t>(t, "gateway", "request_timeout_seconds")) c.gateway.request_timeout = std::chrono::seconds{*v};
  if (auto v = get<std::int64_t>(t, "gateway", "concurrency")) c.gateway.concurrency = static_cast<std::size_t>(*v);
  if (auto v = get<std::int64_t>(t, "gateway", "max_image_bytes")) c.gateway.max_image_bytes = static_cast<std::size_t>(*v);
  if (auto v = get<bool>(t, "gateway", "stub")) c.stub_llm = *v;
  if (const auto* eps = t["gateway"]["endpoints"].as_array()) {
    for (const auto& node : *eps) {
      const auto* ep = node.as_table();
      if (ep == nullptr) fail(ErrorCode::ConfigError, "gateway.endpoints entries must be tables");
      EndpointConfig e;
      e.base_url = (*ep)["base_url"].value_or(std::string{});
      e.model_name = (*ep)["model"].value_or(std::string{});
      e.api_key_env_var = (*ep)["api_key_env"].value_or(std::string{});
      e.supports_images = (*ep)["supports_images"].value_or(true);
      if (e.base_url.empty() || e.model_name.empty()) {
        fail(ErrorCode::ConfigError, "each gateway endpoint needs base_url and model");
      }
      c.gateway.endpoints.push_back(std::move(e));
    }
  }

  if (auto v = get<std::int64_t>(t, "budgets", "queries")) c.query_budget = *v;
  if (auto v = get<std::int64_t>(t, "budgets", "resets")) c.reset_budget = *v;

  if (auto v = get_list<std::string>(t, "evaluator", "command")) c.evaluator.command = *v;
  if (auto v = get<std::int64_t>(t, "evaluator", "parallelism")) c.evaluator.parallelism = static_cast<std::size_t>(*v);
  if (auto v = get<std::int64_t>(t, "evaluator", "max_steps_per_episode")) c.evaluator.max_steps_per_episode = *v;
  if (auto v = get<double>(t, "evaluator", "wall_clock_seconds")) c.evaluator.wall_clock_seconds = *v;
  if (auto v = get<double>(t, "evaluator", "handshake_timeout_seconds")) c.evaluator.handshake_timeout_seconds = *v;
  if (auto v = get<bool>(t, "evaluator", "stub")) c.evaluator.stub = *v;

  if (auto v = get<std::int64_t>(t, "run", "seed")) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = get<std::int64_t>(t, "run", "checkpoint_every")) c.checkpoint_every = *v;
  if (auto v = get<std::int64_t>(t, "run", "max_generations")) c.max_generations = *v;
  c.gateway.query_budget = c.query_budget;
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

/// Effective configuration as TOML; parse_config(config_to_toml(c)) == c.
inline std::string config_to_toml(const RunConfig& c) {
  auto ints = [](const auto& xs) {
    toml::array a;
    for (auto x : xs) a.push_back(static_cast<std::int64_t>(x));
    return a;
  };
  auto strings = [](const std::vector<std::string>& xs) {
    toml::array a;
    for (const auto& x : xs) a.push_back(x);
    return a;
  };

  toml::table task{{"name", std::string(to_string(c.task))}, {"instance_seeds", ints(c.instance_seeds)}};
  if (!c.description_file.empty()) task.insert("description_file", c.description_file);
  if (!c.code_template_file.empty()) task.insert("code_template_file", c.code_template_file);
  if (!c.seed_policy_files.empty()) task.insert("seed_policies", strings(c.seed_policy_files));

  std::vector<std::string> ops;
  for (auto op : c.operators) ops.push_back(to_string(op));
  toml::table operators{{"enabled", strings(ops)},
                        {"offspring_per_operator", static_cast<std::int64_t>(c.offspring_per_operator)}};
  if (c.ibe_max_images) operators.insert("ibe_max_images", static_cast<std::int64_t>(*c.ibe_max_images));
  if (!c.templates_dir.empty()) operators.insert("templates_dir", c.templates_dir);

  toml::array endpoints;
  for (const auto& e : c.gateway.endpoints) {
    endpoints.push_back(toml::table{{"base_url", e.base_url},
                                    {"model", e.model_name},
                                    {"api_key_env", e.api_key_env_var},
                                    {"supports_images", e.supports_images}});
  }
  toml::table gateway{{"temperature", c.gateway.temperature},
                      {"max_retries", static_cast<std::int64_t>(c.gateway.max_retries)},
                      {"request_timeout_seconds", static_cast<std::int64_t>(c.gateway.request_timeout.count())},
                      {"concurrency", static_cast<std::int64_t>(c.gateway.concurrency)},
                      {"max_image_bytes", static_cast<std::int64_t>(c.gateway.max_image_bytes)},
                      {"stub", c.stub_llm}};
  if (!endpoints.empty()) gateway.insert("endpoints", std::move(endpoints));

  toml::table evaluator{{"command", strings(c.evaluator.command)},
                        {"parallelism", static_cast<std::int64_t>(c.evaluator.parallelism)},
                        {"max_steps_per_episode", c.evaluator.max_steps_per_episode},
                        {"wall_clock_seconds", c.evaluator.wall_clock_seconds},
                        {"handshake_timeout_seconds", c.evaluator.handshake_timeout_seconds},
                        {"stub", c.evaluator.stub}};

  // Resets stay implicit unless set, so a resumed run with a larger query
  // budget also gets the matching reset budget.
  toml::table budgets{{"queries", c.query_budget}};
  if (c.reset_budget) budgets.insert("resets", *c.reset_budget);

  toml::table run{{"seed", static_cast<std::int64_t>(c.seed)}, {"checkpoint_every", c.checkpoint_every}};
  if (c.max_generations) run.insert("max_generations", *c.max_generations);

  toml::table root{{"task", std::move(task)},
                   {"pool",
                    toml::table{{"capacity", static_cast<std::int64_t>(c.pool_capacity)},
                                {"parents", static_cast<std::int64_t>(c.parents)},
                                {"admit_failed", c.admit_failed}}},
                   {"operators", std::move(operators)},
                   {"gateway", std::move(gateway)},
                   {"budgets", std::move(budgets)},
                   {"evaluator", std::move(evaluator)},
                   {"run", std::move(run)}};
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

/// Hash of the search-relevant configuration. Budgets and run length are
/// left out so a checkpointed run may be resumed with a larger budget.
inline std::string config_hash(const RunConfig& c) {
  auto copy = c;
  copy.query_budget = 0;
  copy.reset_budget = 0;
  copy.gateway.query_budget = 0;
  copy.max_generations.reset();
  copy.checkpoint_every = 1;
  return sha256_hex(config_to_toml(copy));
}

} // namespace mles
