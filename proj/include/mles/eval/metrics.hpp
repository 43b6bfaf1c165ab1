#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/core/types.hpp"

namespace mles {

/// Lander score: reward R scaled by 200, fuel C capped at 100, success rate S.
/// R is deliberately left unclamped, so the score can go negative.
inline double compute_nws(double reward, double fuel, double success) {
  if (!(fuel >= 0.0)) fail(ErrorCode::DomainError, "fuel must be non-negative");
  if (!(success >= 0.0 && success <= 1.0)) fail(ErrorCode::DomainError, "success rate must lie in [0, 1]");
  return reward / 200.0 * 0.6 + (1.0 - std::min(fuel / 100.0, 1.0)) * 0.2 + success * 0.2;
}

inline double completion_percent(long tiles_visited, long tiles_total) {
  if (tiles_total <= 0 || tiles_visited < 0 || tiles_visited > tiles_total) {
    fail(ErrorCode::DomainError, "tile counts out of range");
  }
  return static_cast<double>(tiles_visited) / static_cast<double>(tiles_total) * 100.0;
}

/// Floor score assigned to policies that error or time out.
inline double failure_score(TaskKind task) { return task == TaskKind::lunar_lander ? -1.0 : 0.0; }

namespace detail {
inline void require_task(std::span<const InstanceMetrics> per_instance, TaskKind task) {
  if (per_instance.empty()) fail(ErrorCode::InvalidArgument, "no instances to aggregate");
  for (const auto& m : per_instance) {
    if (m.task() != task) fail(ErrorCode::MixedTask, "instance " + m.instance_id + " is not " + std::string(to_string(task)));
  }
}
} // namespace detail

inline QuantitativeMetrics aggregate_lander(std::span<const InstanceMetrics> per_instance) {
  detail::require_task(per_instance, TaskKind::lunar_lander);
  double r = 0;
  double c = 0;
  double s = 0;
  for (const auto& m : per_instance) {
    const auto& o = std::get<LanderOutcome>(m.outcome);
    r += m.episode_reward;
    c += o.fuel;
    s += o.success ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(per_instance.size());
  QuantitativeMetrics q;
  q.aggregate_score = compute_nws(r / n, c / n, s / n);
  q.per_instance.assign(per_instance.begin(), per_instance.end());
  q.resets_used = static_cast<std::int64_t>(per_instance.size());
  q.status = EvalStatus::ok;
  return q;
}

inline QuantitativeMetrics aggregate_racing(std::span<const InstanceMetrics> per_instance) {
  detail::require_task(per_instance, TaskKind::car_racing);
  double sum = 0;
  for (const auto& m : per_instance) sum += std::get<RacingOutcome>(m.outcome).completion;
  QuantitativeMetrics q;
  q.aggregate_score = sum / static_cast<double>(per_instance.size());
  q.per_instance.assign(per_instance.begin(), per_instance.end());
  q.resets_used = static_cast<std::int64_t>(per_instance.size());
  q.status = EvalStatus::ok;
  return q;
}

inline QuantitativeMetrics aggregate(TaskKind task, std::span<const InstanceMetrics> per_instance) {
  return task == TaskKind::lunar_lander ? aggregate_lander(per_instance) : aggregate_racing(per_instance);
}

} // namespace mles
