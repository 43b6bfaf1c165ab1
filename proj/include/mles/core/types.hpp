#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mles/core/error.hpp"

namespace mles {

using json = nlohmann::json;

enum class TaskKind { lunar_lander, car_racing };

NLOHMANN_JSON_SERIALIZE_ENUM(TaskKind, {{TaskKind::lunar_lander, "lunar_lander"},
                                        {TaskKind::car_racing, "car_racing"}})

inline std::string_view to_string(TaskKind t) noexcept {
  return t == TaskKind::lunar_lander ? "lunar_lander" : "car_racing";
}

inline TaskKind parse_task_kind(std::string_view name) {
  if (name == "lunar_lander") return TaskKind::lunar_lander;
  if (name == "car_racing") return TaskKind::car_racing;
  fail(ErrorCode::ConfigError, "unknown task '" + std::string(name) + "'");
}

// Lunar Lander per-episode outcome: fuel C and landing success S.
struct LanderOutcome {
  double fuel = 0.0;
  bool success = false;
  bool operator==(const LanderOutcome&) const = default;
};

// Car Racing per-episode outcome: percentage of track tiles visited.
struct RacingOutcome {
  double completion = 0.0;
  bool operator==(const RacingOutcome&) const = default;
};

struct InstanceMetrics {
  std::string instance_id;
  double episode_reward = 0.0;
  std::int64_t steps = 0;
  std::variant<LanderOutcome, RacingOutcome> outcome;

  [[nodiscard]] TaskKind task() const noexcept {
    return std::holds_alternative<LanderOutcome>(outcome) ? TaskKind::lunar_lander : TaskKind::car_racing;
  }
  bool operator==(const InstanceMetrics&) const = default;
};

enum class EvalStatus { ok, policy_error, timeout, protocol_error };

NLOHMANN_JSON_SERIALIZE_ENUM(EvalStatus, {{EvalStatus::ok, "ok"},
                                          {EvalStatus::policy_error, "policy_error"},
                                          {EvalStatus::timeout, "timeout"},
                                          {EvalStatus::protocol_error, "protocol_error"}})

struct QuantitativeMetrics {
  double aggregate_score = 0.0;
  std::vector<InstanceMetrics> per_instance;
  std::int64_t resets_used = 0;
  // Anything but ok means aggregate_score is the configured failure floor and
  // per_instance is empty.
  EvalStatus status = EvalStatus::ok;
  std::string error_detail;

  [[nodiscard]] bool failed() const noexcept { return status != EvalStatus::ok; }
  bool operator==(const QuantitativeMetrics&) const = default;
};

enum class IbeKind { frame_stack_image, trajectory_map_image, text_state_trace };

NLOHMANN_JSON_SERIALIZE_ENUM(IbeKind, {{IbeKind::frame_stack_image, "frame_stack_image"},
                                       {IbeKind::trajectory_map_image, "trajectory_map_image"},
                                       {IbeKind::text_state_trace, "text_state_trace"}})

inline constexpr std::string_view kMediaPng = "image/png";
inline constexpr std::string_view kMediaText = "text/plain";

[[nodiscard]] constexpr bool is_image_kind(IbeKind k) noexcept { return k != IbeKind::text_state_trace; }

struct IBEArtifactRef {
  IbeKind kind = IbeKind::frame_stack_image;
  std::string instance_id;
  std::string content_ref;  // path relative to the run directory
  std::string media_type;

  [[nodiscard]] bool is_image() const noexcept { return is_image_kind(kind); }
  bool operator==(const IBEArtifactRef&) const = default;
};

enum class OperatorKind { E1, E2, M1, M1_M, M1_M_NOINSTR, M1_T, M1_M_TWOSTAGE, M2_M };

NLOHMANN_JSON_SERIALIZE_ENUM(OperatorKind, {{OperatorKind::E1, "E1"},
                                            {OperatorKind::E2, "E2"},
                                            {OperatorKind::M1, "M1"},
                                            {OperatorKind::M1_M, "M1_M"},
                                            {OperatorKind::M1_M_NOINSTR, "M1_M_NOINSTR"},
                                            {OperatorKind::M1_T, "M1_T"},
                                            {OperatorKind::M1_M_TWOSTAGE, "M1_M_TWOSTAGE"},
                                            {OperatorKind::M2_M, "M2_M"}})

inline constexpr OperatorKind kAllOperators[] = {
    OperatorKind::E1,   OperatorKind::E2,           OperatorKind::M1,   OperatorKind::M1_M,
    OperatorKind::M1_M_NOINSTR, OperatorKind::M1_T, OperatorKind::M1_M_TWOSTAGE, OperatorKind::M2_M};

inline std::string to_string(OperatorKind op) { return json(op).get<std::string>(); }

inline OperatorKind parse_operator(std::string_view name) {
  for (auto op : kAllOperators) {
    if (to_string(op) == name) return op;
  }
  fail(ErrorCode::ConfigError, "unknown operator '" + std::string(name) + "'");
}

struct LineageRecord {
  std::vector<std::string> parent_ids;  // empty for the initial population
  std::optional<OperatorKind> op;       // absent for seeds
  std::int64_t generation = 0;
  std::optional<std::string> llm_response_hash;
  bool operator==(const LineageRecord&) const = default;
};

struct PolicyIndividual {
  std::string id;
  std::string code;
  std::string thought;
  std::optional<QuantitativeMetrics> metrics;
  std::vector<IBEArtifactRef> ibe;
  LineageRecord origin;
  std::string fingerprint;

  [[nodiscard]] bool evaluated() const noexcept { return metrics.has_value(); }
  [[nodiscard]] double score() const {
    if (!metrics) fail(ErrorCode::UnevaluatedCandidate, "individual " + id + " has no metrics");
    return metrics->aggregate_score;
  }
  bool operator==(const PolicyIndividual&) const = default;
};

// ---- JSON mapping -----------------------------------------------------------

inline void to_json(json& j, const InstanceMetrics& m) {
  j = json{{"instance_id", m.instance_id}, {"episode_reward", m.episode_reward}, {"steps", m.steps}};
  if (const auto* l = std::get_if<LanderOutcome>(&m.outcome)) {
    j["fuel"] = l->fuel;
    j["success"] = l->success;
  } else {
    j["completion"] = std::get<RacingOutcome>(m.outcome).completion;
  }
}

inline void from_json(const json& j, InstanceMetrics& m) {
  m.instance_id = j.at("instance_id").get<std::string>();
  m.episode_reward = j.at("episode_reward").get<double>();
  m.steps = j.value("steps", std::int64_t{0});
  const bool lander = j.contains("fuel") || j.contains("success");
  const bool racing = j.contains("completion");
  if (lander == racing) {
    fail(ErrorCode::ProtocolError, "instance metrics must carry exactly one task-specific field group");
  }
  if (lander) {
    m.outcome = LanderOutcome{j.at("fuel").get<double>(), j.at("success").get<bool>()};
  } else {
    m.outcome = RacingOutcome{j.at("completion").get<double>()};
  }
}

inline void to_json(json& j, const QuantitativeMetrics& m) {
  j = json{{"aggregate_score", m.aggregate_score},
           {"per_instance", m.per_instance},
           {"resets_used", m.resets_used},
           {"status", m.status}};
  if (!m.error_detail.empty()) j["error_detail"] = m.error_detail;
}

inline void from_json(const json& j, QuantitativeMetrics& m) {
  m.aggregate_score = j.at("aggregate_score").get<double>();
  m.per_instance = j.at("per_instance").get<std::vector<InstanceMetrics>>();
  m.resets_used = j.at("resets_used").get<std::int64_t>();
  m.status = j.value("status", EvalStatus::ok);
  m.error_detail = j.value("error_detail", std::string{});
}

inline void to_json(json& j, const IBEArtifactRef& r) {
  j = json{{"kind", r.kind}, {"instance_id", r.instance_id}, {"content_ref", r.content_ref},
           {"media_type", r.media_type}};
}

inline void from_json(const json& j, IBEArtifactRef& r) {
  r.kind = j.at("kind").get<IbeKind>();
  r.instance_id = j.at("instance_id").get<std::string>();
  r.content_ref = j.at("content_ref").get<std::string>();
  r.media_type = j.at("media_type").get<std::string>();
}

inline void to_json(json& j, const LineageRecord& r) {
  j = json{{"parent_ids", r.parent_ids}, {"generation", r.generation}};
  j["operator"] = r.op ? json(*r.op) : json(nullptr);
  j["llm_response_hash"] = r.llm_response_hash ? json(*r.llm_response_hash) : json(nullptr);
}

inline void from_json(const json& j, LineageRecord& r) {
  r.parent_ids = j.at("parent_ids").get<std::vector<std::string>>();
  r.generation = j.at("generation").get<std::int64_t>();
  r.op = j.at("operator").is_null() ? std::nullopt : std::optional(j.at("operator").get<OperatorKind>());
  r.llm_response_hash = j.at("llm_response_hash").is_null()
                            ? std::nullopt
                            : std::optional(j.at("llm_response_hash").get<std::string>());
}

inline void to_json(json& j, const PolicyIndividual& p) {
  j = json{{"id", p.id},         {"code", p.code},     {"thought", p.thought},
           {"ibe", p.ibe},       {"origin", p.origin}, {"fingerprint", p.fingerprint}};
  j["metrics"] = p.metrics ? json(*p.metrics) : json(nullptr);
}

inline void from_json(const json& j, PolicyIndividual& p) {
  p.id = j.at("id").get<std::string>();
  p.code = j.at("code").get<std::string>();
  p.thought = j.at("thought").get<std::string>();
  p.ibe = j.at("ibe").get<std::vector<IBEArtifactRef>>();
  p.origin = j.at("origin").get<LineageRecord>();
  p.fingerprint = j.at("fingerprint").get<std::string>();
  p.metrics = j.at("metrics").is_null() ? std::nullopt
                                        : std::optional(j.at("metrics").get<QuantitativeMetrics>());
}

} // namespace mles
