#pragma once

#include <cstddef>
#include <string>

#include "mles/core/types.hpp"

namespace mles {

enum class EvidenceUse { none, image, text };

/// Static description of an evolutionary operator. E-family operators take m
/// parents and no evidence; the M-family rewrites a single parent.
struct OperatorId {
  OperatorKind name = OperatorKind::E1;
  std::size_t arity = 2;
  EvidenceUse uses_ibe = EvidenceUse::none;
  bool instructs_analysis = false;
  bool two_stage = false;

  [[nodiscard]] bool is_exploration() const noexcept {
    return name == OperatorKind::E1 || name == OperatorKind::E2;
  }
  /// Response must carry a '...' execution-result description.
  [[nodiscard]] bool demands_description() const noexcept { return instructs_analysis; }
  /// Response must carry a [...] analysis (every modification operator asks for one).
  [[nodiscard]] bool demands_analysis() const noexcept { return !is_exploration(); }
  [[nodiscard]] bool sends_images() const noexcept { return uses_ibe == EvidenceUse::image && !two_stage; }

  bool operator==(const OperatorId&) const = default;
};

inline OperatorId operator_id(OperatorKind kind, std::size_t parents_m = 2) {
  switch (kind) {
    case OperatorKind::E1:
    case OperatorKind::E2: return {kind, parents_m, EvidenceUse::none, false, false};
    case OperatorKind::M1: return {kind, 1, EvidenceUse::none, false, false};
    case OperatorKind::M1_M: return {kind, 1, EvidenceUse::image, true, false};
    case OperatorKind::M1_M_NOINSTR: return {kind, 1, EvidenceUse::image, false, false};
    case OperatorKind::M1_T: return {kind, 1, EvidenceUse::text, true, false};
    case OperatorKind::M1_M_TWOSTAGE: return {kind, 1, EvidenceUse::image, false, true};
    case OperatorKind::M2_M: return {kind, 1, EvidenceUse::image, true, false};
  }
  fail(ErrorCode::InvalidArgument, "unknown operator");
}

} // namespace mles
