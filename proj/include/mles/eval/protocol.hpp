#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/core/types.hpp"

namespace mles {

inline constexpr std::string_view kEvalProtocol = "mles-eval/1";

enum class RequestKind { evaluate, ensemble_evaluate, shutdown };

NLOHMANN_JSON_SERIALIZE_ENUM(RequestKind, {{RequestKind::evaluate, "evaluate"},
                                           {RequestKind::ensemble_evaluate, "ensemble_evaluate"},
                                           {RequestKind::shutdown, "shutdown"}})

struct EvalLimits {
  std::int64_t max_steps_per_episode = 1000;
  double wall_clock_seconds = 60.0;  // per episode
  bool operator==(const EvalLimits&) const = default;
};

struct EvalRequest {
  std::string request_id;
  RequestKind kind = RequestKind::evaluate;
  TaskKind task = TaskKind::lunar_lander;
  std::string code;                // evaluate
  std::vector<std::string> codes;  // ensemble_evaluate
  std::vector<std::string> instance_ids;
  std::vector<std::int64_t> seeds;
  std::vector<IbeKind> ibe_kinds;
  EvalLimits limits;

  void validate() const {
    if (kind == RequestKind::shutdown) return;
    if (instance_ids.empty()) fail(ErrorCode::InvalidArgument, "request needs at least one instance");
    if (seeds.size() != instance_ids.size()) fail(ErrorCode::InvalidArgument, "seeds must align with instance_ids");
    if (limits.max_steps_per_episode <= 0 || !(limits.wall_clock_seconds > 0)) {
      fail(ErrorCode::InvalidArgument, "limits must be positive");
    }
    if (kind == RequestKind::evaluate && code.empty()) fail(ErrorCode::EmptyCode, "evaluate request without code");
    if (kind == RequestKind::ensemble_evaluate && codes.empty()) {
      fail(ErrorCode::InvalidArgument, "ensemble request without codes");
    }
  }
};

struct IbePayload {
  IbeKind kind = IbeKind::frame_stack_image;
  std::string instance_id;
  std::string media_type;
  std::string content_base64;
  bool operator==(const IbePayload&) const = default;
};

struct EvalReport {
  double aggregate_score = 0.0;
  std::vector<InstanceMetrics> per_instance;
  bool operator==(const EvalReport&) const = default;
};

struct EvalResponse {
  std::string request_id;
  EvalStatus status = EvalStatus::ok;
  std::optional<EvalReport> report;
  std::int64_t resets_used = 0;
  std::string error_detail;
  std::vector<IbePayload> ibe_payloads;
  bool operator==(const EvalResponse&) const = default;
};

/// Capabilities announced by an evaluator as its first frame.
struct EvaluatorHello {
  std::string protocol{kEvalProtocol};
  std::vector<TaskKind> tasks;
  std::vector<IbeKind> ibe_kinds;
  bool ensemble = false;
  json versions = json::object();
};

inline json request_to_json(const EvalRequest& r) {
  json j{{"type", "request"}, {"request_id", r.request_id}, {"kind", r.kind}};
  if (r.kind == RequestKind::shutdown) return j;
  j["task"] = r.task;
  if (r.kind == RequestKind::evaluate) {
    j["code"] = r.code;
  } else {
    j["codes"] = r.codes;
  }
  j["instance_ids"] = r.instance_ids;
  j["seeds"] = r.seeds;
  j["ibe_kinds"] = r.ibe_kinds;
  j["limits"] = {{"max_steps_per_episode", r.limits.max_steps_per_episode},
                 {"wall_clock_seconds", r.limits.wall_clock_seconds}};
  return j;
}

inline EvalRequest request_from_json(const json& j) {
  try {
    if (j.at("type") != "request") fail(ErrorCode::ProtocolError, "not a request frame");
    EvalRequest r;
    r.request_id = j.at("request_id").get<std::string>();
    r.kind = j.at("kind").get<RequestKind>();
    if (r.kind == RequestKind::shutdown) return r;
    r.task = j.at("task").get<TaskKind>();
    if (r.kind == RequestKind::evaluate) {
      r.code = j.at("code").get<std::string>();
    } else {
      r.codes = j.at("codes").get<std::vector<std::string>>();
    }
    r.instance_ids = j.at("instance_ids").get<std::vector<std::string>>();
    r.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
    r.ibe_kinds = j.value("ibe_kinds", std::vector<IbeKind>{});
    const auto& limits = j.at("limits");
    r.limits.max_steps_per_episode = limits.at("max_steps_per_episode").get<std::int64_t>();
    r.limits.wall_clock_seconds = limits.at("wall_clock_seconds").get<double>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::ProtocolError, std::string("malformed request: ") + e.what());
  }
}

inline json response_to_json(const EvalResponse& r) {
  json j{{"type", "response"},
         {"request_id", r.request_id},
         {"status", r.status},
         {"resets_used", r.resets_used},
         {"report", nullptr}};
  if (r.report) j["report"] = {{"aggregate_score", r.report->aggregate_score}, {"per_instance", r.report->per_instance}};
  if (!r.error_detail.empty()) j["error_detail"] = r.error_detail;
  json payloads = json::array();
  for (const auto& p : r.ibe_payloads) {
    payloads.push_back({{"kind", p.kind},
                        {"instance_id", p.instance_id},
                        {"media_type", p.media_type},
                        {"content_base64", p.content_base64}});
  }
  j["ibe_payloads"] = std::move(payloads);
  return j;
}

/// Strict decoding of one response line. Anything that is not a well-formed
/// response frame raises ProtocolError.
inline EvalResponse parse_response_frame(std::string_view line) {
  const auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::ProtocolError, "frame is not a JSON object");
  try {
    if (j.at("type") != "response") fail(ErrorCode::ProtocolError, "expected a response frame");
    EvalResponse r;
    r.request_id = j.at("request_id").get<std::string>();
    r.status = j.at("status").get<EvalStatus>();
    const auto& status = j.at("status");
    if (!status.is_string() || (status != "ok" && status != "policy_error" && status != "timeout" &&
                                status != "protocol_error")) {
      fail(ErrorCode::ProtocolError, "unknown status");
    }
    r.resets_used = j.at("resets_used").get<std::int64_t>();
    if (r.resets_used < 0) fail(ErrorCode::ProtocolError, "negative resets_used");
    const auto& report = j.at("report");
    if (!report.is_null()) {
      EvalReport rep;
      rep.aggregate_score = report.at("aggregate_score").get<double>();
      rep.per_instance = report.at("per_instance").get<std::vector<InstanceMetrics>>();
      r.report = std::move(rep);
    }
    if ((r.status == EvalStatus::ok) != r.report.has_value()) {
      fail(ErrorCode::ProtocolError, "status ok must come with a report and only then");
    }
    r.error_detail = j.value("error_detail", std::string{});
    for (const auto& p : j.value("ibe_payloads", json::array())) {
      r.ibe_payloads.push_back({p.at("kind").get<IbeKind>(), p.at("instance_id").get<std::string>(),
                                p.at("media_type").get<std::string>(), p.at("content_base64").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::ProtocolError, std::string("malformed response: ") + e.what());
  }
}

inline json hello_to_json(const EvaluatorHello& h) {
  return {{"type", "hello"},
          {"protocol", h.protocol},
          {"tasks", h.tasks},
          {"ibe_kinds", h.ibe_kinds},
          {"capabilities", {{"ensemble", h.ensemble}}},
          {"versions", h.versions}};
}

inline EvaluatorHello parse_hello_frame(std::string_view line) {
  const auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::ProtocolError, "handshake is not a JSON object");
  try {
    if (j.at("type") != "hello") fail(ErrorCode::ProtocolError, "expected a hello frame");
    EvaluatorHello h;
    h.protocol = j.at("protocol").get<std::string>();
    if (h.protocol != kEvalProtocol) {
      fail(ErrorCode::SchemaMismatch, "evaluator speaks " + h.protocol + ", expected " + std::string(kEvalProtocol));
    }
    h.tasks = j.at("tasks").get<std::vector<TaskKind>>();
    h.ibe_kinds = j.value("ibe_kinds", std::vector<IbeKind>{});
    h.ensemble = j.value("capabilities", json::object()).value("ensemble", false);
    h.versions = j.value("versions", json::object());
    return h;
  } catch (const json::exception& e) {
    fail(ErrorCode::ProtocolError, std::string("malformed handshake: ") + e.what());
  }
}

} // namespace mles
