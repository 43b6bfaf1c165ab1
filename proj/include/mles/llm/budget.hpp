#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>

#include "mles/core/error.hpp"

namespace mles {

/// Monotone LLM-query and environment-reset counters against fixed caps.
///
/// Work is admitted through reservations: a Grant holds units out of the
/// remaining budget, consume() turns them into usage and whatever is left is
/// returned on destruction. Concurrent callers therefore can never overshoot
/// a cap; a failed reservation is the signal to halt.
class BudgetLedger {
public:
  enum class Resource { queries, resets };

  class Grant {
  public:
    Grant() = default;
    Grant(Grant&& other) noexcept { *this = std::move(other); }
    Grant& operator=(Grant&& other) noexcept {
      if (this != &other) {
        release();
        owner_ = other.owner_;
        resource_ = other.resource_;
        held_ = other.held_;
        other.owner_ = nullptr;
        other.held_ = 0;
      }
      return *this;
    }
    Grant(const Grant&) = delete;
    Grant& operator=(const Grant&) = delete;
    ~Grant() { release(); }

    [[nodiscard]] std::int64_t held() const noexcept { return held_; }

    void consume(std::int64_t n) {
      if (n < 0 || n > held_) fail(ErrorCode::BudgetExhausted, "consuming more than was reserved");
      if (n == 0) return;
      owner_->commit(resource_, n);
      held_ -= n;
    }

    void release() noexcept {
      if (owner_ != nullptr && held_ > 0) owner_->unreserve(resource_, held_);
      held_ = 0;
    }

  private:
    friend class BudgetLedger;
    Grant(BudgetLedger* owner, Resource r, std::int64_t n) : owner_(owner), resource_(r), held_(n) {}
    BudgetLedger* owner_ = nullptr;
    Resource resource_ = Resource::queries;
    std::int64_t held_ = 0;
  };

  BudgetLedger(std::int64_t query_budget, std::int64_t reset_budget)
      : query_budget_(query_budget), reset_budget_(reset_budget) {
    if (query_budget <= 0 || reset_budget <= 0) fail(ErrorCode::ConfigError, "budgets must be positive");
  }

  BudgetLedger(const BudgetLedger&) = delete;
  BudgetLedger& operator=(const BudgetLedger&) = delete;

  [[nodiscard]] std::int64_t query_budget() const noexcept { return query_budget_; }
  [[nodiscard]] std::int64_t reset_budget() const noexcept { return reset_budget_; }

  [[nodiscard]] std::int64_t queries_used() const {
    std::lock_guard lock(mutex_);
    return queries_used_;
  }
  [[nodiscard]] std::int64_t resets_used() const {
    std::lock_guard lock(mutex_);
    return resets_used_;
  }
  // Resets spent outside the search budget (initial population evaluation).
  [[nodiscard]] std::int64_t uncharged_resets() const {
    std::lock_guard lock(mutex_);
    return uncharged_resets_;
  }
  [[nodiscard]] std::int64_t remaining(Resource r) const {
    std::lock_guard lock(mutex_);
    return r == Resource::queries ? query_budget_ - queries_used_ - queries_reserved_
                                  : reset_budget_ - resets_used_ - resets_reserved_;
  }

  std::optional<Grant> try_reserve(Resource r, std::int64_t n) {
    if (n < 0) fail(ErrorCode::InvalidArgument, "negative reservation");
    std::lock_guard lock(mutex_);
    auto& used = r == Resource::queries ? queries_used_ : resets_used_;
    auto& reserved = r == Resource::queries ? queries_reserved_ : resets_reserved_;
    const auto cap = r == Resource::queries ? query_budget_ : reset_budget_;
    if (cap - used - reserved < n) return std::nullopt;
    reserved += n;
    return Grant(this, r, n);
  }

  Grant reserve(Resource r, std::int64_t n) {
    auto g = try_reserve(r, n);
    if (!g) {
      fail(ErrorCode::BudgetExhausted, std::string(r == Resource::queries ? "query" : "reset") + " budget has " +
                                           std::to_string(remaining(r)) + " left, " + std::to_string(n) + " needed");
    }
    return std::move(*g);
  }

  void record_uncharged_resets(std::int64_t n) {
    std::lock_guard lock(mutex_);
    uncharged_resets_ += n;
  }

  /// Restores counters from a checkpoint or a ledger replay.
  void restore(std::int64_t queries_used, std::int64_t resets_used, std::int64_t uncharged_resets) {
    std::lock_guard lock(mutex_);
    if (queries_used > query_budget_ || resets_used > reset_budget_) {
      fail(ErrorCode::BudgetExhausted, "restored counters exceed the configured caps");
    }
    queries_used_ = queries_used;
    resets_used_ = resets_used;
    uncharged_resets_ = uncharged_resets;
  }

private:
  void commit(Resource r, std::int64_t n) {
    std::lock_guard lock(mutex_);
    if (r == Resource::queries) {
      queries_reserved_ -= n;
      queries_used_ += n;
    } else {
      resets_reserved_ -= n;
      resets_used_ += n;
    }
  }

  void unreserve(Resource r, std::int64_t n) noexcept {
    std::lock_guard lock(mutex_);
    (r == Resource::queries ? queries_reserved_ : resets_reserved_) -= n;
  }

  mutable std::mutex mutex_;
  std::int64_t query_budget_;
  std::int64_t reset_budget_;
  std::int64_t queries_used_ = 0;
  std::int64_t resets_used_ = 0;
  std::int64_t queries_reserved_ = 0;
  std::int64_t resets_reserved_ = 0;
  std::int64_t uncharged_resets_ = 0;
};

} // namespace mles
