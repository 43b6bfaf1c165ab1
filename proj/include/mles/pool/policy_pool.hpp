#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/core/types.hpp"
#include "mles/pool/rng.hpp"

namespace mles {

/// Fixed-capacity population of evaluated individuals, kept sorted best-first.
///
/// Order: successful evaluations before failure-floored ones, then
/// aggregate_score descending, then earlier admission first. Failure-floored
/// members therefore only occupy slots that no successful policy needs.
class PolicyPool {
public:
  struct Member {
    PolicyIndividual individual;
    std::uint64_t admitted_at = 0;
    bool operator==(const Member&) const = default;
  };

  explicit PolicyPool(std::size_t capacity = 16, bool admit_failed = true)
      : capacity_(capacity), admit_failed_(admit_failed) {
    if (capacity == 0) fail(ErrorCode::InvalidArgument, "pool capacity must be positive");
  }

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] bool admits_failed() const noexcept { return admit_failed_; }
  [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
  [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
  [[nodiscard]] const std::vector<Member>& members() const noexcept { return members_; }
  [[nodiscard]] std::uint64_t next_admission() const noexcept { return next_admission_; }

  [[nodiscard]] const PolicyIndividual& at_rank(std::size_t rank) const {
    if (rank == 0 || rank > members_.size()) fail(ErrorCode::InvalidArgument, "rank out of range");
    return members_[rank - 1].individual;
  }

  [[nodiscard]] const PolicyIndividual& best() const {
    if (members_.empty()) fail(ErrorCode::EmptyPool, "pool is empty");
    return members_.front().individual;
  }

  [[nodiscard]] std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(members_.size());
    for (const auto& m : members_) out.push_back(m.individual.id);
    return out;
  }

  [[nodiscard]] bool contains_fingerprint(const std::string& fp) const {
    return std::any_of(members_.begin(), members_.end(),
                       [&](const Member& m) { return m.individual.fingerprint == fp; });
  }

  bool operator==(const PolicyPool&) const = default;

  static bool ranks_before(const Member& a, const Member& b) {
    const auto& ma = *a.individual.metrics;
    const auto& mb = *b.individual.metrics;
    if (ma.failed() != mb.failed()) return !ma.failed();
    if (ma.aggregate_score != mb.aggregate_score) return ma.aggregate_score > mb.aggregate_score;
    return a.admitted_at < b.admitted_at;
  }

  friend struct PoolAccess;

private:
  std::size_t capacity_;
  bool admit_failed_;
  std::vector<Member> members_;
  std::uint64_t next_admission_ = 0;
};

struct PoolAccess {
  static std::vector<PolicyPool::Member>& members(PolicyPool& p) { return p.members_; }
  static std::uint64_t& next_admission(PolicyPool& p) { return p.next_admission_; }
};

struct AdmissionResult {
  PolicyPool pool;
  std::vector<std::string> admitted;   // candidate ids that made the cut
  std::vector<std::string> evicted;    // former members truncated away
  std::vector<std::string> redundant;  // candidates dropped for a duplicate fingerprint
  std::vector<std::string> rejected;   // candidates that did not make the cut or were refused by config
};

/// Redundancy filter, merge, sort, truncate. The best-so-far score never
/// decreases because incumbents compete on equal terms with offspring.
inline AdmissionResult admit_offspring(const PolicyPool& pool, std::span<const PolicyIndividual> candidates) {
  for (const auto& c : candidates) {
    if (!c.evaluated()) fail(ErrorCode::UnevaluatedCandidate, "candidate " + c.id + " was never evaluated");
  }
  AdmissionResult result{pool, {}, {}, {}, {}};
  auto& members = PoolAccess::members(result.pool);
  auto& counter = PoolAccess::next_admission(result.pool);

  std::unordered_set<std::string> seen;
  for (const auto& m : members) seen.insert(m.individual.fingerprint);

  std::unordered_set<std::string> fresh_ids;
  for (const auto& c : candidates) {
    if (!seen.insert(c.fingerprint).second) {
      result.redundant.push_back(c.id);
      continue;
    }
    if (c.metrics->failed() && !pool.admits_failed()) {
      result.rejected.push_back(c.id);
      continue;
    }
    members.push_back({c, counter++});
    fresh_ids.insert(c.id);
  }

  std::stable_sort(members.begin(), members.end(), PolicyPool::ranks_before);
  if (members.size() > pool.capacity()) {
    for (auto it = members.begin() + static_cast<std::ptrdiff_t>(pool.capacity()); it != members.end(); ++it) {
      if (fresh_ids.erase(it->individual.id) != 0) {
        result.rejected.push_back(it->individual.id);
      } else {
        result.evicted.push_back(it->individual.id);
      }
    }
    members.resize(pool.capacity());
  }
  // Report admissions in candidate order, which is also admission order.
  for (const auto& c : candidates) {
    if (fresh_ids.count(c.id) != 0) result.admitted.push_back(c.id);
  }
  return result;
}

// ---- rank-based parent selection ---------------------------------------------

/// p_i = (1/(r_i+N)) / sum_j 1/(r_j+N), ranks 1-based.
inline std::vector<double> selection_weights(std::span<const std::size_t> ranks, std::size_t pool_capacity) {
  if (ranks.empty()) fail(ErrorCode::EmptyPool, "no ranks to weight");
  if (pool_capacity == 0) fail(ErrorCode::InvalidArgument, "pool capacity must be positive");
  std::vector<bool> used(ranks.size() + 1, false);
  for (auto r : ranks) {
    if (r == 0 || r > ranks.size() || used[r]) {
      fail(ErrorCode::InvalidArgument, "ranks must be distinct, 1-based and at most the pool size");
    }
    used[r] = true;
  }
  std::vector<double> w(ranks.size());
  double total = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    w[i] = 1.0 / static_cast<double>(ranks[i] + pool_capacity);
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

namespace detail {

inline std::size_t draw_index(std::span<const double> weights, const std::vector<bool>& available, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (available[i]) total += weights[i];
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!available[i]) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // rounding at the top edge
}

} // namespace detail

/// Draws m parents without replacement (renormalizing after each draw); when
/// the pool holds fewer than m members the remaining slots are drawn with
/// replacement. Result is in draw order.
inline std::vector<PolicyIndividual> select_parents(const PolicyPool& pool, std::size_t m, Rng& rng) {
  if (pool.empty()) fail(ErrorCode::EmptyPool, "cannot select parents from an empty pool");
  if (m == 0) fail(ErrorCode::InvalidArgument, "parent count must be positive");
  const std::size_t n = pool.size();
  std::vector<std::size_t> ranks(n);
  std::iota(ranks.begin(), ranks.end(), std::size_t{1});
  const auto weights = selection_weights(ranks, pool.capacity());

  std::vector<PolicyIndividual> parents;
  parents.reserve(m);
  std::vector<bool> available(n, true);
  const std::vector<bool> all(n, true);
  for (std::size_t k = 0; k < m; ++k) {
    if (k < n) {
      const auto i = detail::draw_index(weights, available, rng);
      available[i] = false;
      parents.push_back(pool.members()[i].individual);
    } else {
      const auto i = detail::draw_index(weights, all, rng);
      parents.push_back(pool.members()[i].individual);
    }
  }
  return parents;
}

// ---- serialization ---------------------------------------------------------

inline json pool_to_json(const PolicyPool& pool) {
  json members = json::array();
  for (const auto& m : pool.members()) members.push_back({{"individual", m.individual}, {"admitted_at", m.admitted_at}});
  return {{"capacity", pool.capacity()},
          {"admit_failed", pool.admits_failed()},
          {"next_admission", pool.next_admission()},
          {"members", members}};
}

inline PolicyPool pool_from_json(const json& j) {
  PolicyPool pool(j.at("capacity").get<std::size_t>(), j.at("admit_failed").get<bool>());
  PoolAccess::next_admission(pool) = j.at("next_admission").get<std::uint64_t>();
  for (const auto& m : j.at("members")) {
    PoolAccess::members(pool).push_back(
        {m.at("individual").get<PolicyIndividual>(), m.at("admitted_at").get<std::uint64_t>()});
  }
  return pool;
}

} // namespace mles
