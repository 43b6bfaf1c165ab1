#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mles/core/artifact_store.hpp"
#include "mles/core/hash.hpp"
#include "mles/core/types.hpp"
#include "mles/operators/operator_id.hpp"
#include "mles/operators/task_spec.hpp"
#include "mles/operators/template_renderer.hpp"
#include "mles/resources.hpp"

namespace mles {

/// Operator prompt templates. Defaults are the compiled-in resources; a
/// directory with e1.tmpl, e2.tmpl, m1.tmpl, m2.tmpl, describe.tmpl overrides them.
struct PromptTemplates {
  std::string e1{resources::templates_e1_tmpl};
  std::string e2{resources::templates_e2_tmpl};
  std::string m1{resources::templates_m1_tmpl};
  std::string m2{resources::templates_m2_tmpl};
  std::string describe{resources::templates_describe_tmpl};

  static PromptTemplates from_directory(const std::filesystem::path& dir) {
    PromptTemplates t;
    auto load = [&](const char* name, std::string& slot) {
      const auto p = dir / name;
      if (std::filesystem::exists(p)) slot = read_file(p);
    };
    load("e1.tmpl", t.e1);
    load("e2.tmpl", t.e2);
    load("m1.tmpl", t.m1);
    load("m2.tmpl", t.m2);
    load("describe.tmpl", t.describe);
    return t;
  }

  [[nodiscard]] const std::string& for_operator(OperatorKind op) const {
    switch (op) {
      case OperatorKind::E1: return e1;
      case OperatorKind::E2: return e2;
      case OperatorKind::M2_M: return m2;
      default: return m1;
    }
  }
};

struct TextSegment {
  std::string text;
  bool operator==(const TextSegment&) const = default;
};

struct ImageSegment {
  std::string content_ref;
  std::string media_type;
  bool operator==(const ImageSegment&) const = default;
};

using Segment = std::variant<TextSegment, ImageSegment>;

enum class PromptPurpose { generate, describe };

/// One multimodal prompt: ordered text and image segments plus the metadata
/// the gateway and stub backend need.
struct PromptBundle {
  std::vector<Segment> segments;
  std::optional<OperatorKind> op;  // absent for stage-one describe prompts
  PromptPurpose purpose = PromptPurpose::generate;
  std::vector<std::string> parent_codes;
  std::string entry_point = "choose_action";

  [[nodiscard]] bool has_images() const {
    for (const auto& s : segments) {
      if (std::holds_alternative<ImageSegment>(s)) return true;
    }
    return false;
  }

  [[nodiscard]] std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += std::holds_alternative<ImageSegment>(s) ? 1 : 0;
    return n;
  }

  /// Text with images shown as `<image:ref>` markers.
  [[nodiscard]] std::string flattened() const {
    std::string out;
    for (const auto& s : segments) {
      if (const auto* t = std::get_if<TextSegment>(&s)) {
        out += t->text;
      } else {
        out += "<image:" + std::get<ImageSegment>(s).content_ref + ">";
      }
    }
    return out;
  }

  /// Image refs are content hashes, so this is a hash of the full prompt content.
  [[nodiscard]] std::string content_hash() const { return sha256_hex(flattened()); }
};

namespace detail {

inline void push_text(std::vector<Segment>& segments, std::string text) {
  if (text.empty()) return;
  if (!segments.empty()) {
    if (auto* t = std::get_if<TextSegment>(&segments.back())) {
      t->text += text;
      return;
    }
  }
  segments.push_back(TextSegment{std::move(text)});
}

inline std::string instance_block(const std::string& instance_id, const std::string& body) {
  std::string out = "Instance " + instance_id + ":\n" + body;
  if (!out.empty() && out.back() != '\n') out.push_back('\n');
  return out;
}

} // namespace detail

struct RenderOptions {
  const PromptTemplates* templates = nullptr;
  // Resolves text_state_trace refs to their content (M1_T).
  std::function<std::string(const IBEArtifactRef&)> load_text;
  // Stage-one descriptions, aligned with the image refs (two-stage operator).
  std::vector<std::string> descriptions;
};

inline PromptBundle render_prompt(const OperatorId& op, const TaskSpec& task,
                                  std::span<const PolicyIndividual> parents,
                                  std::span<const IBEArtifactRef> ibe_selection, const RenderOptions& options = {}) {
  if (parents.size() != op.arity) {
    fail(ErrorCode::ArityMismatch, to_string(op.name) + " expects " + std::to_string(op.arity) + " parent(s), got " +
                                       std::to_string(parents.size()));
  }
  if (op.uses_ibe != EvidenceUse::none && ibe_selection.empty()) {
    fail(ErrorCode::MissingIBE, to_string(op.name) + " requires behavioral evidence");
  }
  if (op.uses_ibe == EvidenceUse::none && !ibe_selection.empty()) {
    fail(ErrorCode::InvalidArgument, to_string(op.name) + " takes no behavioral evidence");
  }
  for (const auto& ref : ibe_selection) {
    const bool want_image = op.uses_ibe == EvidenceUse::image;
    if (ref.is_image() != want_image) {
      fail(ErrorCode::InvalidArgument, to_string(op.name) + " got evidence of the wrong kind for " + ref.instance_id);
    }
  }
  if (op.two_stage && options.descriptions.size() != ibe_selection.size()) {
    fail(ErrorCode::MissingIBE, "two-stage operator needs one description per image");
  }
  if (op.uses_ibe == EvidenceUse::text && !options.load_text) {
    fail(ErrorCode::InvalidArgument, "text evidence requires a loader");
  }

  static const PromptTemplates kDefaults{};
  const auto& templates = options.templates ? *options.templates : kDefaults;

  TemplateContext ctx;
  ctx.set("task_description", task.task_description).set("code_template", task.code_template);
  if (op.is_exploration()) {
    TemplateList items;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      TemplateContext item;
      item.set("index", std::to_string(i + 1)).set("thought", parents[i].thought).set("code", parents[i].code);
      items.push_back(std::move(item));
    }
    ctx.set("parent_count", std::to_string(parents.size())).set("parents", std::move(items));
  } else {
    ctx.set("thought", parents[0].thought).set("code", parents[0].code);
    ctx.set("has_evidence", op.uses_ibe != EvidenceUse::none);
    ctx.set("instructs_analysis", op.instructs_analysis);
  }

  PromptBundle bundle;
  bundle.op = op.name;
  bundle.purpose = PromptPurpose::generate;
  bundle.entry_point = task.entry_point;
  for (const auto& p : parents) bundle.parent_codes.push_back(p.code);

  for (auto& piece : render_template(templates.for_operator(op.name), ctx)) {
    if (auto* text = std::get_if<std::string>(&piece)) {
      detail::push_text(bundle.segments, std::move(*text));
      continue;
    }
    for (std::size_t i = 0; i < ibe_selection.size(); ++i) {
      const auto& ref = ibe_selection[i];
      if (op.two_stage) {
        detail::push_text(bundle.segments, detail::instance_block(ref.instance_id, options.descriptions[i]));
      } else if (op.uses_ibe == EvidenceUse::text) {
        detail::push_text(bundle.segments, detail::instance_block(ref.instance_id, options.load_text(ref)));
      } else {
        detail::push_text(bundle.segments, "Instance " + ref.instance_id + ":\n");
        bundle.segments.push_back(ImageSegment{ref.content_ref, ref.media_type});
        detail::push_text(bundle.segments, "\n");
      }
    }
  }
  return bundle;
}

/// Stage-one prompt of the two-stage operator: one image, asking only for a description.
inline PromptBundle render_describe_prompt(const TaskSpec& task, const IBEArtifactRef& image,
                                           const PromptTemplates& templates = {}) {
  if (!image.is_image()) fail(ErrorCode::InvalidArgument, "describe prompt needs an image");
  TemplateContext ctx;
  ctx.set("task_description", task.task_description);
  PromptBundle bundle;
  bundle.purpose = PromptPurpose::describe;
  bundle.entry_point = task.entry_point;
  detail::push_text(bundle.segments, render_text(templates.describe, ctx));
  bundle.segments.push_back(ImageSegment{image.content_ref, image.media_type});
  return bundle;
}

} // namespace mles
