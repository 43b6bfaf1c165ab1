#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>

#include "mles/core/artifact_store.hpp"
#include "mles/core/error.hpp"
#include "mles/core/hash.hpp"
#include "mles/pool/policy_pool.hpp"

namespace mles {

inline constexpr std::string_view kCheckpointSchema = "mles-checkpoint/1";

/// Search state at a generation boundary.
struct RunState {
  PolicyPool pool = PolicyPool();
  std::int64_t generation = 0;  // completed generations; 0 right after initialization
  std::int64_t queries_used = 0;
  std::int64_t resets_used = 0;
  std::int64_t uncharged_resets = 0;
  std::uint64_t root_seed = 0;
  std::int64_t ledger_length = 0;
  bool halted = false;
  std::string halt_reason;

  bool operator==(const RunState&) const = default;
};

struct Checkpoint {
  std::string config_hash;
  RunState state;
};

inline json checkpoint_to_json(const Checkpoint& c) {
  const auto& s = c.state;
  json j{{"schema", kCheckpointSchema},
         {"config_hash", c.config_hash},
         {"generation", s.generation},
         {"pool", pool_to_json(s.pool)},
         {"budget", {{"queries_used", s.queries_used}, {"resets_used", s.resets_used}, {"uncharged_resets", s.uncharged_resets}}},
         {"rng", {{"root_seed", s.root_seed}, {"generation", s.generation}}},
         {"ledger_length", s.ledger_length},
         {"halted", s.halted},
         {"halt_reason", s.halt_reason}};
  j["content_hash"] = sha256_hex(j.dump());
  return j;
}

inline Checkpoint checkpoint_from_json(json j) {
  if (!j.is_object()) fail(ErrorCode::CorruptCheckpoint, "checkpoint is not a JSON object");
  if (j.value("schema", std::string{}) != kCheckpointSchema) {
    fail(ErrorCode::SchemaMismatch, "checkpoint schema '" + j.value("schema", std::string{}) + "', expected " +
                                        std::string(kCheckpointSchema));
  }
  if (!j.contains("content_hash") || !j["content_hash"].is_string()) {
    fail(ErrorCode::CorruptCheckpoint, "checkpoint has no content hash");
  }
  const auto stored = j["content_hash"].get<std::string>();
  j.erase("content_hash");
  if (sha256_hex(j.dump()) != stored) fail(ErrorCode::CorruptCheckpoint, "checkpoint content hash mismatch");
  try {
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::string>();
    auto& s = c.state;
    s.generation = j.at("generation").get<std::int64_t>();
    s.pool = pool_from_json(j.at("pool"));
    s.queries_used = j.at("budget").at("queries_used").get<std::int64_t>();
    s.resets_used = j.at("budget").at("resets_used").get<std::int64_t>();
    s.uncharged_resets = j.at("budget").at("uncharged_resets").get<std::int64_t>();
    s.root_seed = j.at("rng").at("root_seed").get<std::uint64_t>();
    s.ledger_length = j.at("ledger_length").get<std::int64_t>();
    s.halted = j.at("halted").get<bool>();
    s.halt_reason = j.at("halt_reason").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, e.what());
  }
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::int64_t generation) {
  return run_dir / "checkpoints" / ("gen-" + std::to_string(generation) + ".json");
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file(path, checkpoint_to_json(c).dump(2) + "\n");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto text = read_file(path);
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::CorruptCheckpoint, path.string() + " is not valid JSON");
  return checkpoint_from_json(std::move(j));
}

/// Highest-numbered checkpoint in the run directory, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir) {
  const auto dir = run_dir / "checkpoints";
  if (!std::filesystem::exists(dir)) return std::nullopt;
  static const std::regex name(R"(gen-(\d+)\.json)");
  std::optional<std::filesystem::path> best;
  long long best_gen = -1;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto file = entry.path().filename().string();
    if (std::regex_match(file, m, name) && std::stoll(m[1]) > best_gen) {
      best_gen = std::stoll(m[1]);
      best = entry.path();
    }
  }
  return best;
}

} // namespace mles
