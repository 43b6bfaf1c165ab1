#pragma once

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mles/core/artifact_store.hpp"
#include "mles/core/ledger.hpp"
#include "mles/orchestrator/replay.hpp"

namespace mles {

inline constexpr std::size_t kThoughtExcerpt = 120;

struct ConvergencePoint {
  std::int64_t generation = 0;
  std::int64_t cumulative_resets = 0;
  double best_score = 0.0;
};

/// One point per generation that spent resets, taken from generation_end
/// events. Generations without new resets are skipped so the x-axis is
/// strictly increasing.
inline std::vector<ConvergencePoint> convergence_series(const std::vector<LedgerEvent>& events) {
  std::vector<ConvergencePoint> out;
  for (const auto& e : events) {
    if (e.type != event::generation_end) continue;
    ConvergencePoint p{e.data.at("generation").get<std::int64_t>(), e.data.at("resets_used").get<std::int64_t>(),
                       e.data.at("best_score").get<double>()};
    if (!out.empty() && p.cumulative_resets <= out.back().cumulative_resets) continue;
    out.push_back(p);
  }
  return out;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string convergence_csv(const std::vector<LedgerEvent>& events) {
  std::string out = "generation,cumulative_resets,best_score\n";
  for (const auto& p : convergence_series(events)) {
    out += std::to_string(p.generation) + "," + std::to_string(p.cumulative_resets) + "," + format_real(p.best_score) + "\n";
  }
  return out;
}

inline std::string excerpt(const std::string& thought) {
  if (thought.size() <= kThoughtExcerpt) return thought;
  // Cut on a UTF-8 boundary.
  std::size_t cut = kThoughtExcerpt;
  while (cut > 0 && (static_cast<unsigned char>(thought[cut]) & 0xC0) == 0x80) --cut;
  return thought.substr(0, cut);
}

/// Admitted individuals (seeds included) as nodes; parent-to-child edges
/// labelled with the operator. Candidates that never entered the pool are
/// left out.
inline json lineage_json(const std::vector<LedgerEvent>& events) {
  const auto st = replay_ledger(events);
  std::vector<std::string> admitted;
  std::set<std::string> in_graph;
  for (const auto& e : events) {
    if (e.type != event::population_initialized && e.type != event::admission) continue;
    for (const auto& id : e.data.at("admitted")) {
      admitted.push_back(id.get<std::string>());
      in_graph.insert(id.get<std::string>());
    }
  }
  json nodes = json::array();
  json edges = json::array();
  for (const auto& id : admitted) {
    const auto& ind = st.individuals.at(id);
    nodes.push_back({{"id", id},
                     {"generation", ind.origin.generation},
                     {"score", ind.metrics->aggregate_score},
                     {"thought", excerpt(ind.thought)}});
    for (const auto& p : ind.origin.parent_ids) {
      if (in_graph.count(p) == 0) continue;
      edges.push_back({{"from", p}, {"to", id}, {"operator", to_string(*ind.origin.op)}});
    }
  }
  return {{"nodes", nodes}, {"edges", edges}};
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

inline std::string lineage_dot(const json& lineage) {
  std::string out = "digraph lineage {\n  rankdir=TB;\n  node [shape=box, fontsize=10];\n";
  for (const auto& n : lineage.at("nodes")) {
    out += "  \"" + dot_escape(n.at("id").get<std::string>()) + "\" [label=\"" +
           dot_escape(n.at("id").get<std::string>()) + " (gen " + std::to_string(n.at("generation").get<std::int64_t>()) +
           ", " + format_real(n.at("score").get<double>()) + ")\\n" + dot_escape(n.at("thought").get<std::string>()) +
           "\"];\n";
  }
  for (const auto& e : lineage.at("edges")) {
    out += "  \"" + dot_escape(e.at("from").get<std::string>()) + "\" -> \"" + dot_escape(e.at("to").get<std::string>()) +
           "\" [label=\"" + e.at("operator").get<std::string>() + "\"];\n";
  }
  out += "}\n";
  return out;
}

inline json summary_json(const std::vector<LedgerEvent>& events) {
  const auto st = replay_ledger(events);
  json out{{"generations", st.generation},
           {"budget",
            {{"queries_used", st.queries_used},
             {"resets_used", st.resets_used},
             {"uncharged_resets", st.uncharged_resets}}},
           {"pool_size", st.pool.size()}};
  for (const auto& e : events) {
    if (e.type == event::run_started) {
      out["budget"]["query_budget"] = e.data.at("query_budget");
      out["budget"]["reset_budget"] = e.data.at("reset_budget");
      out["task"] = e.data.at("task");
    }
    if (e.type == event::run_finished) out["finish_reason"] = e.data.at("reason");
  }
  if (!st.pool.empty()) {
    const auto& best = st.pool.best();
    out["best"] = {{"id", best.id},
                   {"score", best.metrics->aggregate_score},
                   {"generation", best.origin.generation},
                   {"operator", best.origin.op ? json(*best.origin.op) : json(nullptr)},
                   {"thought", best.thought},
                   {"code", best.code}};
  }
  return out;
}

/// Writes convergence.csv, lineage.json, lineage.dot and summary.json into out_dir.
inline void write_reports(const std::vector<LedgerEvent>& events, const std::filesystem::path& out_dir) {
  const auto lineage = lineage_json(events);
  write_file(out_dir / "convergence.csv", convergence_csv(events));
  write_file(out_dir / "lineage.json", lineage.dump(2) + "\n");
  write_file(out_dir / "lineage.dot", lineage_dot(lineage));
  write_file(out_dir / "summary.json", summary_json(events).dump(2) + "\n");
}

} // namespace mles
