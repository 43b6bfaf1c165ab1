#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "mles/core/error.hpp"
#include "mles/core/hash.hpp"

namespace mles {

/// Canonical whitespace form of policy source: line endings unified, runs of
/// spaces/tabs collapsed to one space, trailing whitespace stripped and blank
/// lines dropped.
inline std::string normalize_code(std::string_view code) {
  std::string out;
  std::string line;
  auto flush = [&] {
    while (!line.empty() && line.back() == ' ') line.pop_back();
    if (!line.empty()) {
      out += line;
      out.push_back('\n');
    }
    line.clear();
  };
  bool in_blank_run = false;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const char c = code[i];
    if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < code.size() && code[i + 1] == '\n') ++i;
      flush();
      in_blank_run = false;
    } else if (c == ' ' || c == '\t' || c == '\v' || c == '\f') {
      if (!in_blank_run) line.push_back(' ');
      in_blank_run = true;
    } else {
      line.push_back(c);
      in_blank_run = false;
    }
  }
  flush();
  return out;
}

inline std::string fingerprint(std::string_view code) {
  const auto normalized = normalize_code(code);
  if (normalized.empty()) fail(ErrorCode::EmptyCode, "policy code is empty or whitespace only");
  return sha256_hex(normalized);
}

/// Number of top-level-or-nested `def <name>(` definitions in Python source.
inline std::size_t count_definitions(std::string_view code, std::string_view entry_point) {
  std::size_t count = 0;
  std::size_t pos = 0;
  const std::string needle = "def ";
  while ((pos = code.find(needle, pos)) != std::string_view::npos) {
    const bool at_word_start = pos == 0 || code[pos - 1] == ' ' || code[pos - 1] == '\t' ||
                               code[pos - 1] == '\n' || code[pos - 1] == '\r';
    std::size_t p = pos + needle.size();
    while (p < code.size() && (code[p] == ' ' || code[p] == '\t')) ++p;
    if (at_word_start && code.substr(p, entry_point.size()) == entry_point) {
      std::size_t q = p + entry_point.size();
      while (q < code.size() && (code[q] == ' ' || code[q] == '\t')) ++q;
      if (q < code.size() && code[q] == '(') ++count;
    }
    pos += needle.size();
  }
  return count;
}

inline void require_single_entry_point(std::string_view code, std::string_view entry_point) {
  if (normalize_code(code).empty()) fail(ErrorCode::EmptyCode, "policy code is empty");
  const auto n = count_definitions(code, entry_point);
  if (n != 1) {
    fail(ErrorCode::InvalidEntryPoint, "expected exactly one definition of '" + std::string(entry_point) +
                                           "', found " + std::to_string(n));
  }
}

} // namespace mles
