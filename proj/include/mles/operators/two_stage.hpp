#pragma once

#include <span>
#include <string>
#include <vector>

#include "mles/llm/gateway.hpp"
#include "mles/operators/prompt.hpp"

namespace mles {

/// Stage one of the two-stage operator: one describe call per image, each
/// charged one query from `grant`. Throws EndpointFailure if any call
/// exhausts its retries.
inline std::vector<std::string> describe_images(LlmGateway& gateway, const TaskSpec& task,
                                                std::span<const IBEArtifactRef> images, BudgetLedger::Grant& grant,
                                                std::uint64_t route_key, const PromptTemplates& templates = {}) {
  if (images.empty()) fail(ErrorCode::MissingIBE, "two-stage operator requires images");
  std::vector<std::string> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto slot = gateway.generate(render_describe_prompt(task, images[i], templates), 1, grant, route_key + i)[0];
    if (!slot.ok()) fail(ErrorCode::EndpointFailure, slot.error);
    out.push_back(std::move(*slot.text));
  }
  return out;
}

} // namespace mles
