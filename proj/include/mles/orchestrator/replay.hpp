#pragma once

#include <map>
#include <string>
#include <vector>

#include "mles/core/ledger.hpp"
#include "mles/pool/policy_pool.hpp"

namespace mles {

namespace event {
inline constexpr const char* run_started = "run_started";
inline constexpr const char* seed_evaluated = "seed_evaluated";
inline constexpr const char* population_initialized = "population_initialized";
inline constexpr const char* generation_started = "generation_started";
inline constexpr const char* invocation_skipped = "invocation_skipped";
inline constexpr const char* llm_request = "llm_request";
inline constexpr const char* llm_response = "llm_response";
inline constexpr const char* llm_error = "llm_error";
inline constexpr const char* parse_failure = "parse_failure";
inline constexpr const char* candidate_evaluated = "candidate_evaluated";
inline constexpr const char* budget_halt = "budget_halt";
inline constexpr const char* admission = "admission";
inline constexpr const char* generation_end = "generation_end";
inline constexpr const char* run_finished = "run_finished";
} // namespace event

/// State reconstructed purely from ledger events.
struct ReplayState {
  PolicyPool pool;
  std::int64_t generation = 0;
  std::int64_t queries_used = 0;
  std::int64_t resets_used = 0;
  std::int64_t uncharged_resets = 0;
  // Every evaluated individual (seeds and offspring) by id.
  std::map<std::string, PolicyIndividual> individuals;
};

/// Re-runs admission over the recorded candidates, generation by generation,
/// and re-sums the budget counters from the per-event charges.
inline ReplayState replay_ledger(const std::vector<LedgerEvent>& events) {
  ReplayState st;
  std::vector<PolicyIndividual> batch;
  for (const auto& e : events) {
    const auto& d = e.data;
    if (e.type == event::run_started) {
      st.pool = PolicyPool(d.at("pool_capacity").get<std::size_t>(), d.at("admit_failed").get<bool>());
    } else if (e.type == event::seed_evaluated || e.type == event::candidate_evaluated) {
      auto ind = d.at("individual").get<PolicyIndividual>();
      const auto resets = ind.metrics->resets_used;
      if (e.type == event::seed_evaluated) {
        st.uncharged_resets += resets;
      } else {
        st.resets_used += resets;
      }
      st.individuals[ind.id] = ind;
      batch.push_back(std::move(ind));
    } else if (e.type == event::llm_request) {
      st.queries_used += d.at("queries").get<std::int64_t>();
    } else if (e.type == event::population_initialized || e.type == event::admission) {
      st.pool = admit_offspring(st.pool, batch).pool;
      batch.clear();
    } else if (e.type == event::generation_end) {
      st.generation = d.at("generation").get<std::int64_t>();
    }
  }
  return st;
}

} // namespace mles
