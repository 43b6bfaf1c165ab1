#pragma once

#include <string>
#include <vector>

#include "mles/eval/evaluator.hpp"
#include "mles/eval/metrics.hpp"

namespace mles {

struct EnsembleResult {
  EvalStatus status = EvalStatus::ok;
  std::string error_detail;
  std::vector<std::pair<std::int64_t, double>> per_seed;  // seed, score on that instance alone
  double mean = 0.0;
};

inline json ensemble_to_json(const EnsembleResult& r) {
  json seeds = json::array();
  for (const auto& [seed, score] : r.per_seed) seeds.push_back({{"seed", seed}, {"score", score}});
  json j{{"status", r.status}, {"per_seed", seeds}, {"mean", r.mean}};
  if (!r.error_detail.empty()) j["error_detail"] = r.error_detail;
  return j;
}

/// Evaluates all codes as one voting/averaging ensemble on each seed.
/// Requires the evaluator to announce ensemble support in its handshake.
inline EnsembleResult run_ensemble(EvaluatorHandle& handle, TaskKind task, const std::vector<std::string>& codes,
                                   const std::vector<std::int64_t>& seeds, const EvalLimits& limits) {
  if (!handle.hello().ensemble) fail(ErrorCode::EvaluatorUnavailable, "evaluator does not support ensemble evaluation");
  if (codes.empty()) fail(ErrorCode::EmptyPool, "no policies to ensemble");
  EvalRequest req;
  req.request_id = "ensemble";
  req.kind = RequestKind::ensemble_evaluate;
  req.task = task;
  req.codes = codes;
  req.seeds = seeds;
  for (auto s : seeds) req.instance_ids.push_back("seed-" + std::to_string(s));
  req.limits = limits;

  auto out = evaluate_uncharged(handle, req);
  EnsembleResult r;
  r.status = out.metrics.status;
  r.error_detail = out.metrics.error_detail;
  if (out.metrics.failed()) return r;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const InstanceMetrics one[] = {out.metrics.per_instance[i]};
    r.per_seed.emplace_back(seeds[i], aggregate(task, one).aggregate_score);
    r.mean += r.per_seed.back().second;
  }
  r.mean /= static_cast<double>(seeds.size());
  return r;
}

} // namespace mles
