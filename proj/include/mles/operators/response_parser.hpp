#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/operators/operator_id.hpp"

namespace mles {

struct ParsedCandidate {
  std::string thought;
  std::string code;
  std::optional<std::string> description;  // '...' execution-result description
  std::optional<std::string> analysis;     // [...] analysis
  std::string raw;
  bool operator==(const ParsedCandidate&) const = default;
};

namespace detail {

struct Span {
  std::size_t begin;
  std::size_t end;  // exclusive
};

inline std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Drops leading and trailing blank lines but keeps indentation.
inline std::string trim_blank_lines(std::string_view s) {
  std::size_t b = 0;
  while (true) {
    const auto nl = s.find('\n', b);
    if (nl == std::string_view::npos) break;
    if (!trim_view(s.substr(b, nl - b)).empty()) break;
    b = nl + 1;
  }
  s = s.substr(b);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return std::string(s);
}

inline bool is_language_tag(std::string_view line) {
  line = trim_view(line);
  if (line.empty()) return true;
  for (char c : line) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '+' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

struct Fence {
  Span whole;    // including the backticks
  Span content;  // between the backticks, language tag removed
};

inline std::vector<Fence> find_fences(std::string_view raw) {
  std::vector<Fence> fences;
  std::size_t pos = 0;
  while (true) {
    const auto open = raw.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t content_begin = open + 3;
    const auto close = raw.find("```", content_begin);
    const std::size_t content_end = close == std::string_view::npos ? raw.size() : close;
    const std::size_t whole_end = close == std::string_view::npos ? raw.size() : close + 3;
    const auto nl = raw.find('\n', content_begin);
    if (nl != std::string_view::npos && nl < content_end &&
        is_language_tag(raw.substr(content_begin, nl - content_begin))) {
      content_begin = nl + 1;
    }
    fences.push_back({{open, whole_end}, {std::min(content_begin, content_end), content_end}});
    pos = whole_end;
  }
  return fences;
}

inline bool contains_definition(std::string_view text, std::string_view entry_point) {
  const std::string needle = "def " + std::string(entry_point);
  return text.find(needle) != std::string_view::npos;
}

// Unfenced code: from the `def <entry>` line through every following blank or
// indented line.
inline std::optional<Span> find_bare_definition(std::string_view raw, std::string_view entry_point) {
  const std::string needle = "def " + std::string(entry_point);
  auto at = raw.find(needle);
  while (at != std::string_view::npos) {
    const auto line_begin = raw.rfind('\n', at) == std::string_view::npos ? 0 : raw.rfind('\n', at) + 1;
    if (trim_view(raw.substr(line_begin, at - line_begin)).empty()) {
      std::size_t end = raw.find('\n', at);
      end = end == std::string_view::npos ? raw.size() : end + 1;
      while (end < raw.size()) {
        auto next = raw.find('\n', end);
        const auto line = raw.substr(end, (next == std::string_view::npos ? raw.size() : next) - end);
        const bool blank = trim_view(line).empty();
        const bool indented = !line.empty() && (line.front() == ' ' || line.front() == '\t');
        if (!blank && !indented) break;
        end = next == std::string_view::npos ? raw.size() : next + 1;
      }
      return Span{line_begin, end};
    }
    at = raw.find(needle, at + needle.size());
  }
  return std::nullopt;
}

inline std::optional<std::size_t> match_close(std::string_view raw, std::size_t open, char open_c, char close_c,
                                              const std::vector<Span>& masked) {
  int depth = 0;
  for (std::size_t i = open; i < raw.size(); ++i) {
    bool skip = false;
    for (const auto& m : masked) {
      if (i >= m.begin && i < m.end) {
        i = m.end - 1;
        skip = true;
        break;
      }
    }
    if (skip) continue;
    if (raw[i] == open_c) ++depth;
    if (raw[i] == close_c && --depth == 0) return i;
  }
  return std::nullopt;
}

} // namespace detail

/// Extracts thought, code and (for analysis-bearing operators) description and
/// analysis from a raw completion.
///
/// Code is the first fenced block mentioning the entry point, else the first
/// fenced block, else the bare `def <entry>` region. Markers are then scanned
/// left to right outside code: the first `{` opens the thought (balanced
/// braces), the first `[` the analysis and the first `'` the description;
/// whichever opens first owns its span, so section order does not matter.
inline ParsedCandidate parse_response(const OperatorId& op, std::string_view raw, std::string_view entry_point = "choose_action") {
  using namespace detail;
  if (trim_view(raw).empty()) fail(ErrorCode::InvalidArgument, "empty response");

  ParsedCandidate out;
  out.raw = std::string(raw);

  std::vector<Span> masked;
  const auto fences = find_fences(raw);
  for (const auto& f : fences) masked.push_back(f.whole);

  std::optional<Span> code_span;
  for (const auto& f : fences) {
    if (contains_definition(raw.substr(f.content.begin, f.content.end - f.content.begin), entry_point)) {
      code_span = f.content;
      break;
    }
  }
  if (!code_span && !fences.empty()) code_span = fences.front().content;
  if (!code_span) {
    code_span = find_bare_definition(raw, entry_point);
    if (code_span) masked.push_back(*code_span);
  }
  if (code_span) out.code = trim_blank_lines(raw.substr(code_span->begin, code_span->end - code_span->begin));

  const bool want_description = op.demands_description();
  const bool want_analysis = op.demands_analysis();
  bool have_thought = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    bool in_mask = false;
    for (const auto& m : masked) {
      if (i >= m.begin && i < m.end) {
        i = m.end - 1;
        in_mask = true;
        break;
      }
    }
    if (in_mask) continue;
    const char c = raw[i];
    if (c == '{' && !have_thought) {
      if (auto close = match_close(raw, i, '{', '}', masked)) {
        out.thought = std::string(trim_view(raw.substr(i + 1, *close - i - 1)));
        have_thought = true;
        i = *close;
      }
    } else if (c == '[' && want_analysis && !out.analysis) {
      if (auto close = match_close(raw, i, '[', ']', masked)) {
        out.analysis = std::string(trim_view(raw.substr(i + 1, *close - i - 1)));
        i = *close;
      }
    } else if (c == '\'' && want_description && !out.description) {
      const auto close = raw.find('\'', i + 1);
      if (close != std::string_view::npos) {
        out.description = std::string(trim_view(raw.substr(i + 1, close - i - 1)));
        i = close;
      }
    }
  }

  if (!have_thought) fail(ErrorCode::MissingThought, "no {...} span outside code");
  if (out.code.empty()) fail(ErrorCode::MissingCode, "no code block and no '" + std::string(entry_point) + "' definition");
  if (want_description && !out.description) fail(ErrorCode::MissingSection, "description");
  if (want_analysis && !out.analysis) fail(ErrorCode::MissingSection, "analysis");
  return out;
}

} // namespace mles
