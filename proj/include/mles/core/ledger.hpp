#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/core/types.hpp"

namespace mles {

struct LedgerEvent {
  std::int64_t seq = 0;
  std::string type;
  json data = json::object();

  [[nodiscard]] std::string to_line() const {
    return json{{"seq", seq}, {"type", type}, {"data", data}}.dump();
  }

  static LedgerEvent from_line(const std::string& line) {
    const auto j = json::parse(line);
    return {j.at("seq").get<std::int64_t>(), j.at("type").get<std::string>(), j.at("data")};
  }

  bool operator==(const LedgerEvent&) const = default;
};

/// Append-only event log of a run. Sequence numbers are contiguous from 0;
/// appends are serialized so concurrent producers cannot interleave lines.
class RunLedger {
public:
  RunLedger() = default;
  explicit RunLedger(std::vector<LedgerEvent> events) {
    for (auto& e : events) append(std::move(e));
  }

  RunLedger(const RunLedger& other) : events_(other.events()) {}
  RunLedger& operator=(const RunLedger& other) {
    if (this != &other) {
      auto copy = other.events();
      std::lock_guard lock(mutex_);
      events_ = std::move(copy);
      sink_.reset();
    }
    return *this;
  }

  /// Mirror every subsequent append to a JSON-lines file.
  void attach_file(const std::filesystem::path& path, bool truncate) {
    std::lock_guard lock(mutex_);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    sink_.emplace(path, truncate ? std::ios::trunc : std::ios::app);
    if (!*sink_) fail(ErrorCode::IoError, "cannot open ledger " + path.string());
  }

  void append(LedgerEvent event) {
    std::lock_guard lock(mutex_);
    append_locked(std::move(event));
  }

  /// Assigns the next sequence number and appends.
  std::int64_t emit(std::string type, json data) {
    std::lock_guard lock(mutex_);
    const auto seq = static_cast<std::int64_t>(events_.size());
    append_locked({seq, std::move(type), std::move(data)});
    return seq;
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return events_.size();
  }

  [[nodiscard]] std::vector<LedgerEvent> events() const {
    std::lock_guard lock(mutex_);
    return events_;
  }

  [[nodiscard]] std::string to_jsonl() const {
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& e : events_) {
      out += e.to_line();
      out.push_back('\n');
    }
    return out;
  }

private:
  void append_locked(LedgerEvent event) {
    if (event.seq != static_cast<std::int64_t>(events_.size())) {
      fail(ErrorCode::SequenceGap, "event #" + std::to_string(event.seq) + " appended to ledger of length " +
                                       std::to_string(events_.size()));
    }
    if (sink_) {
      *sink_ << event.to_line() << '\n';
      sink_->flush();
    }
    events_.push_back(std::move(event));
  }

  mutable std::mutex mutex_;
  std::vector<LedgerEvent> events_;
  std::optional<std::ofstream> sink_;
};

inline RunLedger ledger_append(RunLedger ledger, LedgerEvent event) {
  ledger.append(std::move(event));
  return ledger;
}

inline std::vector<LedgerEvent> load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open ledger " + path.string());
  std::vector<LedgerEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto e = LedgerEvent::from_line(line);
    if (e.seq != static_cast<std::int64_t>(events.size())) {
      fail(ErrorCode::SequenceGap, "ledger file " + path.string() + " has a gap at #" + std::to_string(e.seq));
    }
    events.push_back(std::move(e));
  }
  return events;
}

} // namespace mles
