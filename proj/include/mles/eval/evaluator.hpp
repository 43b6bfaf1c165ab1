#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mles/core/artifact_store.hpp"
#include "mles/core/hash.hpp"
#include "mles/eval/metrics.hpp"
#include "mles/eval/protocol.hpp"
#include "mles/eval/subprocess.hpp"
#include "mles/llm/budget.hpp"

namespace mles {

inline constexpr double kAggregateTolerance = 1e-9;

/// One evaluator subprocess. Started lazily, restarted after a crash,
/// timeout or desynchronised stream. Requests are strictly sequential.
class EvaluatorHandle {
public:
  explicit EvaluatorHandle(std::vector<std::string> command,
                           std::chrono::milliseconds handshake_timeout = std::chrono::seconds{60},
                           std::chrono::milliseconds grace = std::chrono::seconds{10})
      : proc_(std::move(command)), handshake_timeout_(handshake_timeout), grace_(grace) {}

  EvaluatorHandle(const EvaluatorHandle&) = delete;
  EvaluatorHandle& operator=(const EvaluatorHandle&) = delete;
  ~EvaluatorHandle() { shutdown(); }

  const EvaluatorHello& hello() {
    ensure_started();
    return hello_;
  }

  [[nodiscard]] int starts() const noexcept { return starts_; }

  /// Any failure to reach a working handshake is reported as EvaluatorUnavailable.
  void ensure_started() {
    if (proc_.running()) return;
    proc_.start();
    ++starts_;
    try {
      hello_ = parse_hello_frame(proc_.read_line(handshake_timeout_));
    } catch (const Error& e) {
      proc_.kill();
      fail(ErrorCode::EvaluatorUnavailable, std::string("evaluator handshake failed: ") + e.what());
    }
  }

  /// Sends one request and returns the decoded reply. A reply that is not a
  /// well-formed response frame becomes status protocol_error (and the
  /// process is restarted on next use); silence past the deadline throws
  /// Timeout and a dead process throws EvaluatorCrashed.
  EvalResponse exchange(const EvalRequest& req) {
    req.validate();
    ensure_started();
    proc_.write_line(request_to_json(req).dump());
    if (req.kind == RequestKind::shutdown) return {};

    const auto budget_s = req.limits.wall_clock_seconds * static_cast<double>(req.instance_ids.size());
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(budget_s * 1000.0))) + grace_;
    std::string line;
    try {
      line = proc_.read_line(timeout);
    } catch (const Error&) {
      proc_.kill();
      throw;
    }
    try {
      auto resp = parse_response_frame(line);
      if (resp.request_id != req.request_id) fail(ErrorCode::ProtocolError, "response for another request");
      return resp;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ProtocolError && e.code() != ErrorCode::SchemaMismatch) throw;
      proc_.kill();
      EvalResponse bad;
      bad.request_id = req.request_id;
      bad.status = EvalStatus::protocol_error;
      bad.error_detail = e.what();
      // Unknown how far the evaluator got; assume every episode ran.
      bad.resets_used = static_cast<std::int64_t>(req.instance_ids.size());
      return bad;
    }
  }

  void shutdown() noexcept {
    if (!proc_.running()) return;
    try {
      EvalRequest bye;
      bye.request_id = "shutdown";
      bye.kind = RequestKind::shutdown;
      proc_.write_line(request_to_json(bye).dump());
    } catch (...) {
    }
    proc_.close_gracefully();
  }

private:
  Subprocess proc_;
  std::chrono::milliseconds handshake_timeout_;
  std::chrono::milliseconds grace_;
  EvaluatorHello hello_;
  int starts_ = 0;
};

struct EvalOutcome {
  EvalResponse response;
  QuantitativeMetrics metrics;
};

namespace detail {

// Checks the reply against the request and turns it into metrics. Invariant
// violations become protocol_error with the failure floor.
inline QuantitativeMetrics interpret(const EvalRequest& req, EvalResponse& resp) {
  const auto n = static_cast<std::int64_t>(req.instance_ids.size());
  QuantitativeMetrics m;
  m.resets_used = resp.resets_used;
  if (resp.status == EvalStatus::ok) {
    std::string problem;
    const auto& report = *resp.report;
    if (resp.resets_used != n) {
      problem = "ok response reports " + std::to_string(resp.resets_used) + " resets for " + std::to_string(n) + " instances";
    } else if (report.per_instance.size() != req.instance_ids.size()) {
      problem = "per_instance has the wrong length";
    } else {
      for (std::size_t i = 0; i < report.per_instance.size(); ++i) {
        if (report.per_instance[i].instance_id != req.instance_ids[i]) problem = "per_instance out of order";
        if (report.per_instance[i].task() != req.task) problem = "per_instance for the wrong task";
      }
    }
    if (problem.empty()) {
      const auto recomputed = aggregate(req.task, report.per_instance);
      if (!(std::fabs(recomputed.aggregate_score - report.aggregate_score) <= kAggregateTolerance)) {
        fail(ErrorCode::AggregateMismatch, "evaluator reported " + std::to_string(report.aggregate_score) +
                                               ", recomputed " + std::to_string(recomputed.aggregate_score));
      }
      m.aggregate_score = report.aggregate_score;
      m.per_instance = report.per_instance;
      m.status = EvalStatus::ok;
      return m;
    }
    resp.status = EvalStatus::protocol_error;
    resp.report.reset();
    resp.error_detail = problem;
  }
  if (resp.resets_used > n) resp.resets_used = n;
  m.resets_used = resp.resets_used;
  m.aggregate_score = failure_score(req.task);
  m.status = resp.status;
  m.error_detail = resp.error_detail;
  return m;
}

} // namespace detail

/// Dispatches one evaluation drawing resets from a reservation the caller
/// holds. Reported resets are consumed from the grant; when the evaluator
/// dies or goes silent the whole request is charged, since episodes may have
/// run before the failure.
inline EvalOutcome evaluate_policy(EvaluatorHandle& handle, const EvalRequest& req, BudgetLedger::Grant& resets) {
  const auto n = static_cast<std::int64_t>(req.instance_ids.size());
  if (resets.held() < n) fail(ErrorCode::BudgetExhausted, "reservation holds fewer resets than instances");
  EvalOutcome out;
  try {
    out.response = handle.exchange(req);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Timeout || e.code() == ErrorCode::EvaluatorCrashed) resets.consume(n);
    throw;
  }
  try {
    out.metrics = detail::interpret(req, out.response);
  } catch (const Error&) {
    resets.consume(n);
    throw;
  }
  resets.consume(out.metrics.resets_used);
  return out;
}

/// Same, reserving the resets first; BudgetExhausted before anything is sent.
inline EvalOutcome evaluate_policy(EvaluatorHandle& handle, const EvalRequest& req, BudgetLedger& budget) {
  auto grant = budget.reserve(BudgetLedger::Resource::resets, static_cast<std::int64_t>(req.instance_ids.size()));
  return evaluate_policy(handle, req, grant);
}

/// Evaluation outside the search budget (initial population, final tests).
inline EvalOutcome evaluate_uncharged(EvaluatorHandle& handle, const EvalRequest& req) {
  EvalOutcome out;
  out.response = handle.exchange(req);
  out.metrics = detail::interpret(req, out.response);
  return out;
}

/// Writes IBE payloads into the artifact store and returns their references.
inline std::vector<IBEArtifactRef> store_ibe(const std::vector<IbePayload>& payloads, ArtifactStore& store) {
  std::vector<IBEArtifactRef> refs;
  for (const auto& p : payloads) {
    const auto bytes = base64_decode(p.content_base64);
    const auto ext = p.media_type == kMediaPng ? "png" : "txt";
    refs.push_back({p.kind, p.instance_id, store.put(bytes, ext), p.media_type});
  }
  return refs;
}

/// Fixed set of evaluator processes; each lease hands one out exclusively.
class EvaluatorPool {
public:
  EvaluatorPool(std::vector<std::string> command, std::size_t size,
                std::chrono::milliseconds handshake_timeout = std::chrono::seconds{60}) {
    if (size == 0) fail(ErrorCode::ConfigError, "eval_parallelism must be positive");
    for (std::size_t i = 0; i < size; ++i) {
      handles_.push_back(std::make_unique<EvaluatorHandle>(command, handshake_timeout));
      idle_.push_back(handles_.back().get());
    }
  }

  class Lease {
  public:
    Lease(EvaluatorPool& pool, EvaluatorHandle* h) : pool_(&pool), handle_(h) {}
    Lease(Lease&& o) noexcept : pool_(o.pool_), handle_(o.handle_) { o.handle_ = nullptr; }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    Lease& operator=(Lease&&) = delete;
    ~Lease() {
      if (handle_ != nullptr) pool_->give_back(handle_);
    }
    EvaluatorHandle& operator*() const noexcept { return *handle_; }
    EvaluatorHandle* operator->() const noexcept { return handle_; }

  private:
    EvaluatorPool* pool_;
    EvaluatorHandle* handle_;
  };

  Lease acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !idle_.empty(); });
    auto* h = idle_.back();
    idle_.pop_back();
    return Lease(*this, h);
  }

  [[nodiscard]] std::size_t size() const noexcept { return handles_.size(); }

  const EvaluatorHello& hello() {
    auto lease = acquire();
    return lease->hello();
  }

private:
  void give_back(EvaluatorHandle* h) {
    {
      std::lock_guard lock(mutex_);
      idle_.push_back(h);
    }
    cv_.notify_one();
  }

  std::vector<std::unique_ptr<EvaluatorHandle>> handles_;
  std::vector<EvaluatorHandle*> idle_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

} // namespace mles
