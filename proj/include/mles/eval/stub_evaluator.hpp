#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "mles/core/hash.hpp"
#include "mles/eval/metrics.hpp"
#include "mles/eval/protocol.hpp"
#include "mles/llm/image_codec.hpp"

namespace mles {

struct StubEvaluatorOptions {
  std::size_t target_length = 600;
  bool ensemble = true;
};

/// Deterministic score of a code string: 1 / (1 + |len(code) - target|).
inline double stub_score(std::string_view code, std::size_t target) {
  const auto diff = static_cast<double>(code.size()) - static_cast<double>(target);
  return 1.0 / (1.0 + std::fabs(diff));
}

namespace detail {

// Instance metrics whose aggregate equals the stub score: lander rewards are
// scaled so the fuel and success terms vanish, racing completion is a percentage.
inline InstanceMetrics stub_instance(TaskKind task, const std::string& id, double score) {
  InstanceMetrics m;
  m.instance_id = id;
  m.steps = 100;
  if (task == TaskKind::lunar_lander) {
    m.episode_reward = score * 200.0 / 0.6;
    m.outcome = LanderOutcome{100.0, false};
  } else {
    m.episode_reward = score * 1000.0;
    m.outcome = RacingOutcome{100.0 * score};
  }
  return m;
}

inline std::string stub_png(std::string_view code, std::int64_t seed) {
  const auto h = sha256_u64(std::string(code) + "#" + std::to_string(seed));
  RgbImage img;
  img.width = 16;
  img.height = 16;
  img.pixels.resize(16 * 16 * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>((h >> ((i % 8) * 8)) + i);
  }
  return encode_png(img);
}

inline std::string stub_trace(double score, std::int64_t seed) {
  std::string out = "step x y\n";
  char line[96];
  for (int step = 0; step < 3; ++step) {
    std::snprintf(line, sizeof line, "%d %.4f %.4f\n", step * 30, score * step, static_cast<double>(seed % 7) / 7.0);
    out += line;
  }
  return out;
}

} // namespace detail

/// Answers one request the way the stub evaluator process does. Codes
/// containing "raise" fail as policy errors after running every episode.
inline EvalResponse stub_evaluate(const EvalRequest& req, const StubEvaluatorOptions& opt) {
  EvalResponse resp;
  resp.request_id = req.request_id;
  resp.resets_used = static_cast<std::int64_t>(req.instance_ids.size());
  const auto codes = req.kind == RequestKind::evaluate ? std::vector<std::string>{req.code} : req.codes;

  for (const auto& code : codes) {
    if (code.find("raise") != std::string::npos) {
      resp.status = EvalStatus::policy_error;
      resp.error_detail = "policy raised an exception at step 3";
      return resp;
    }
  }

  double score = 0;
  for (const auto& code : codes) score += stub_score(code, opt.target_length);
  score /= static_cast<double>(codes.size());

  std::vector<InstanceMetrics> per_instance;
  for (std::size_t i = 0; i < req.instance_ids.size(); ++i) {
    per_instance.push_back(detail::stub_instance(req.task, req.instance_ids[i], score));
    for (const auto kind : req.ibe_kinds) {
      const bool image = is_image_kind(kind);
      const auto content = image ? detail::stub_png(codes.front(), req.seeds[i]) : detail::stub_trace(score, req.seeds[i]);
      resp.ibe_payloads.push_back({kind, req.instance_ids[i], std::string(image ? kMediaPng : kMediaText),
                                   base64_encode(content)});
    }
  }
  resp.status = EvalStatus::ok;
  resp.report = EvalReport{aggregate(req.task, per_instance).aggregate_score, std::move(per_instance)};
  return resp;
}

/// The stub evaluator's main loop over newline-delimited frames. Codes
/// containing STUB_HANG, STUB_CRASH or STUB_GARBAGE exercise the engine's
/// timeout, crash and malformed-frame handling.
inline int run_stub_evaluator(std::istream& in, std::ostream& out, const StubEvaluatorOptions& opt) {
  EvaluatorHello hello;
  hello.tasks = {TaskKind::lunar_lander, TaskKind::car_racing};
  hello.ibe_kinds = {IbeKind::frame_stack_image, IbeKind::trajectory_map_image, IbeKind::text_state_trace};
  hello.ensemble = opt.ensemble;
  hello.versions = {{"stub", "1"}};
  out << hello_to_json(hello).dump() << '\n' << std::flush;

  std::string line;
  while (std::getline(in, line)) {
    EvalRequest req;
    try {
      req = request_from_json(json::parse(line));
      if (req.kind == RequestKind::shutdown) return 0;
      req.validate();
    } catch (const std::exception& e) {
      EvalResponse bad;
      bad.request_id = "unknown";
      bad.status = EvalStatus::protocol_error;
      bad.error_detail = e.what();
      out << response_to_json(bad).dump() << '\n' << std::flush;
      continue;
    }
    const auto& sample = req.kind == RequestKind::evaluate ? req.code : req.codes.front();
    if (sample.find("STUB_HANG") != std::string::npos) {
      while (true) std::this_thread::sleep_for(std::chrono::hours{1});
    }
    if (sample.find("STUB_CRASH") != std::string::npos) std::_Exit(3);
    if (sample.find("STUB_GARBAGE") != std::string::npos) {
      out << "this is not a response frame\n" << std::flush;
      continue;
    }
    EvalResponse resp;
    if (req.kind == RequestKind::ensemble_evaluate && !opt.ensemble) {
      resp.request_id = req.request_id;
      resp.status = EvalStatus::protocol_error;
      resp.error_detail = "ensemble evaluation not supported";
    } else {
      resp = stub_evaluate(req, opt);
    }
    out << response_to_json(resp).dump() << '\n' << std::flush;
  }
  return 0;
}

} // namespace mles
