#pragma once

#include <cctype>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mles/core/hash.hpp"
#include "mles/llm/gateway.hpp"
#include "mles/operators/operator_id.hpp"

namespace mles {

namespace stub {

struct NumericLiteral {
  std::size_t pos;
  std::size_t len;
};

inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '.'; }

/// Numeric literals in executable Python: comments, string/docstring bodies
/// and bare subscripts like s[0] are skipped.
inline std::vector<NumericLiteral> numeric_literals(std::string_view code) {
  std::vector<NumericLiteral> out;
  std::size_t i = 0;
  while (i < code.size()) {
    const char c = code[i];
    if (c == '#') {
      while (i < code.size() && code[i] != '\n') ++i;
      continue;
    }
    if (c == '"' || c == '\'') {
      const bool triple = code.substr(i, 3) == std::string(3, c);
      const std::string close = triple ? std::string(3, c) : std::string(1, c);
      const auto end = code.find(close, i + close.size());
      i = end == std::string_view::npos ? code.size() : end + close.size();
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0 && (i == 0 || !ident_char(code[i - 1]))) {
      std::size_t j = i;
      while (j < code.size() && std::isdigit(static_cast<unsigned char>(code[j])) != 0) ++j;
      if (j + 1 < code.size() && code[j] == '.' && std::isdigit(static_cast<unsigned char>(code[j + 1])) != 0) {
        ++j;
        while (j < code.size() && std::isdigit(static_cast<unsigned char>(code[j])) != 0) ++j;
      } else if (j < code.size() && code[j] == '.') {
        ++j;  // "1." is still a float literal
      }
      const bool followed = j < code.size() && (std::isalpha(static_cast<unsigned char>(code[j])) != 0 || code[j] == '_');
      const bool subscript = i > 0 && code[i - 1] == '[' && j < code.size() && code[j] == ']';
      if (!followed && !subscript) out.push_back({i, j - i});
      i = j;
      continue;
    }
    ++i;
  }
  return out;
}

inline std::string mutate_literal(std::string_view literal, std::uint64_t salt) {
  const bool is_float = literal.find('.') != std::string_view::npos;
  if (!is_float) {
    const long long v = std::stoll(std::string(literal));
    const long long step = 1 + static_cast<long long>(salt % 3);
    const long long nv = (salt & 8) != 0 && v - step >= 0 ? v - step : v + step;
    return std::to_string(nv);
  }
  static constexpr double factors[] = {0.5, 0.75, 0.9, 1.1, 1.25, 1.5, 2.0};
  const double v = std::stod(std::string(literal));
  double nv = v == 0.0 ? 0.05 * static_cast<double>(1 + salt % 5) : v * factors[salt % 7];
  std::string text;
  for (int attempt = 0; attempt < 4; ++attempt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", nv);
    text = buf;
    while (text.size() > 1 && text.back() == '0' && text[text.size() - 2] != '.') text.pop_back();
    if (text != literal) break;
    nv += 0.01;
  }
  return text;
}

} // namespace stub

/// Deterministic offline backend. The response is a pure function of the
/// prompt content hash and the completion index: seeded prompts return their
/// table entry (with `{{index}}` substituted), anything else gets a
/// template-conforming response whose code is the first parent's code with
/// one numeric literal changed.
class StubEndpoint : public ChatEndpoint {
public:
  explicit StubEndpoint(std::map<std::string, std::string> seed_table = {}, bool images = true,
                        std::string name = "stub")
      : table_(std::move(seed_table)), images_(images), name_(std::move(name)) {}

  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] bool supports_images() const override { return images_; }

  std::string complete(const PromptBundle& bundle, const CompletionParams& params) override {
    const auto hash = bundle.content_hash();
    if (auto it = table_.find(hash); it != table_.end()) {
      std::string out = it->second;
      const std::string marker = "{{index}}";
      for (auto p = out.find(marker); p != std::string::npos; p = out.find(marker, p)) {
        out.replace(p, marker.size(), std::to_string(params.completion_index));
      }
      return out;
    }
    if (bundle.purpose == PromptPurpose::describe) return describe(bundle);
    return default_response(bundle, sha256_u64(hash + ":" + std::to_string(params.completion_index)));
  }

  static std::string describe(const PromptBundle& bundle) {
    std::string refs;
    for (const auto& s : bundle.segments) {
      if (const auto* img = std::get_if<ImageSegment>(&s)) refs += img->content_ref;
    }
    return "DESCRIPTION(" + sha256_hex(refs).substr(0, 16) + ")";
  }

  static std::string default_response(const PromptBundle& bundle, std::uint64_t salt) {
    std::string code = bundle.parent_codes.empty()
                           ? "def " + bundle.entry_point + "(*args):\n    return 0"
                           : bundle.parent_codes.front();
    const auto literals = stub::numeric_literals(code);
    char tag[17];
    std::snprintf(tag, sizeof tag, "%016llx", static_cast<unsigned long long>(salt));
    std::string thought;
    if (literals.empty()) {
      code += "\n# variant " + std::to_string(salt % 100000);
      thought = std::string("stub variant ") + tag + " annotates the parent policy";
    } else {
      const auto& lit = literals[salt % literals.size()];
      const auto old_text = code.substr(lit.pos, lit.len);
      const auto new_text = stub::mutate_literal(old_text, salt >> 8);
      code.replace(lit.pos, lit.len, new_text);
      thought = std::string("stub variant ") + tag + " changes constant " + old_text + " to " + new_text;
    }

    std::string out;
    if (bundle.op) {
      const auto op = operator_id(*bundle.op);
      if (op.demands_description()) out += std::string("'stub description ") + tag + " of the evidence'\n";
      if (op.demands_analysis()) out += std::string("[stub analysis ") + tag + " of the parent]\n";
    }
    out += "{" + thought + "}\n```python\n" + code + "\n```\n";
    return out;
  }

private:
  std::map<std::string, std::string> table_;
  bool images_;
  std::string name_;
};

} // namespace mles
