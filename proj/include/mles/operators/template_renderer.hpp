#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mles/core/error.hpp"

namespace mles {

// Minimal logic-less template language used by the prompt resources:
//   {{name}}                 substitute a string value
//   {{#name}}...{{/name}}    repeat per list item, or render once if true
//   {{^name}}...{{/name}}    render when false or an empty list
//   {{evidence}}             slot where behavioral evidence is spliced in
// Substituted values are never re-scanned, so code with braces is safe.

struct TemplateContext;
using TemplateList = std::vector<TemplateContext>;

struct TemplateContext {
  std::map<std::string, std::variant<std::string, bool, TemplateList>, std::less<>> values;

  TemplateContext& set(std::string key, std::string value) {
    values[std::move(key)] = std::move(value);
    return *this;
  }
  TemplateContext& set(std::string key, const char* value) { return set(std::move(key), std::string(value)); }
  TemplateContext& set(std::string key, bool value) {
    values[std::move(key)] = value;
    return *this;
  }
  TemplateContext& set(std::string key, TemplateList value) {
    values[std::move(key)] = std::move(value);
    return *this;
  }
};

struct EvidenceSlot {
  bool operator==(const EvidenceSlot&) const = default;
};
using RenderedPiece = std::variant<std::string, EvidenceSlot>;

namespace detail {

struct TemplateRenderer {
  std::string_view source;
  std::vector<RenderedPiece> out;

  void emit(std::string_view text) {
    if (text.empty()) return;
    if (!out.empty() && std::holds_alternative<std::string>(out.back())) {
      std::get<std::string>(out.back()) += text;
    } else {
      out.emplace_back(std::string(text));
    }
  }

  using Value = std::variant<std::string, bool, TemplateList>;

  static const Value* lookup(const std::vector<const TemplateContext*>& scopes, std::string_view key) {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      if (auto found = (*it)->values.find(key); found != (*it)->values.end()) return &found->second;
    }
    return nullptr;
  }

  // Position just past the matching {{/name}} for a section opened before `from`.
  std::size_t find_close(std::size_t from, std::string_view name, std::size_t& body_end) const {
    int depth = 1;
    std::size_t pos = from;
    while (true) {
      const auto open = source.find("{{", pos);
      if (open == std::string_view::npos) fail(ErrorCode::InvalidArgument, "unclosed section " + std::string(name));
      const auto close = source.find("}}", open + 2);
      if (close == std::string_view::npos) fail(ErrorCode::InvalidArgument, "unterminated tag");
      const auto tag = source.substr(open + 2, close - open - 2);
      if ((tag.front() == '#' || tag.front() == '^') && tag.substr(1) == name) ++depth;
      if (tag.front() == '/' && tag.substr(1) == name && --depth == 0) {
        body_end = open;
        return close + 2;
      }
      pos = close + 2;
    }
  }

  void render(std::size_t begin, std::size_t end, std::vector<const TemplateContext*>& scopes) {
    std::size_t pos = begin;
    while (pos < end) {
      const auto open = source.find("{{", pos);
      if (open == std::string_view::npos || open >= end) {
        emit(source.substr(pos, end - pos));
        return;
      }
      emit(source.substr(pos, open - pos));
      const auto close = source.find("}}", open + 2);
      if (close == std::string_view::npos || close + 2 > end) fail(ErrorCode::InvalidArgument, "unterminated tag");
      const auto tag = source.substr(open + 2, close - open - 2);
      if (tag.empty()) fail(ErrorCode::InvalidArgument, "empty tag");
      pos = close + 2;

      if (tag == "evidence") {
        out.emplace_back(EvidenceSlot{});
        continue;
      }
      if (tag.front() == '#' || tag.front() == '^') {
        const auto name = tag.substr(1);
        std::size_t body_end = 0;
        const auto after = find_close(pos, name, body_end);
        const Value* v = lookup(scopes, name);
        if (v == nullptr) fail(ErrorCode::InvalidArgument, "unbound section '" + std::string(name) + "'");
        bool truthy = false;
        if (const auto* b = std::get_if<bool>(v)) truthy = *b;
        if (const auto* l = std::get_if<TemplateList>(v)) truthy = !l->empty();
        if (const auto* s = std::get_if<std::string>(v)) truthy = !s->empty();
        if (tag.front() == '^') {
          if (!truthy) render(pos, body_end, scopes);
        } else if (const auto* l = std::get_if<TemplateList>(v)) {
          for (const auto& item : *l) {
            scopes.push_back(&item);
            render(pos, body_end, scopes);
            scopes.pop_back();
          }
        } else if (truthy) {
          render(pos, body_end, scopes);
        }
        pos = after;
        continue;
      }
      if (tag.front() == '/') fail(ErrorCode::InvalidArgument, "stray close tag " + std::string(tag));
      const Value* v = lookup(scopes, tag);
      const auto* s = v ? std::get_if<std::string>(v) : nullptr;
      if (s == nullptr) fail(ErrorCode::InvalidArgument, "unbound placeholder '" + std::string(tag) + "'");
      emit(*s);
    }
  }
};

} // namespace detail

inline std::vector<RenderedPiece> render_template(std::string_view source, const TemplateContext& context) {
  detail::TemplateRenderer r{source, {}};
  std::vector<const TemplateContext*> scopes{&context};
  r.render(0, source.size(), scopes);
  return std::move(r.out);
}

/// Renders a template that has no evidence slot into a single string.
inline std::string render_text(std::string_view source, const TemplateContext& context) {
  std::string text;
  for (const auto& piece : render_template(source, context)) {
    if (!std::holds_alternative<std::string>(piece)) fail(ErrorCode::InvalidArgument, "unexpected evidence slot");
    text += std::get<std::string>(piece);
  }
  return text;
}

} // namespace mles
