#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mles/core/error.hpp"
#include "mles/llm/budget.hpp"
#include "mles/operators/prompt.hpp"

namespace mles {

struct EndpointConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env_var;
  bool supports_images = true;
};

struct GatewayConfig {
  std::vector<EndpointConfig> endpoints;
  double temperature = 1.0;
  int max_retries = 3;
  std::chrono::seconds request_timeout{120};
  std::int64_t query_budget = 2000;
  std::size_t concurrency = 4;
  std::size_t max_image_bytes = 1u << 20;
};

struct CompletionParams {
  double temperature = 1.0;
  // Position of this completion in the run; lets deterministic backends
  // tell apart repeated requests for the same prompt.
  std::uint64_t completion_index = 0;
};

/// One chat-completion backend. Throws Error(EndpointFailure) on transport
/// or provider failures; the gateway decides whether to retry.
class ChatEndpoint {
public:
  virtual ~ChatEndpoint() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual bool supports_images() const = 0;
  virtual std::string complete(const PromptBundle& bundle, const CompletionParams& params) = 0;
};

struct GenerationSlot {
  std::optional<std::string> text;
  std::string error;
  std::string endpoint;
  int attempts = 0;

  [[nodiscard]] bool ok() const noexcept { return text.has_value(); }
};

/// Round-robin ensemble of chat endpoints behind the query budget.
class LlmGateway {
public:
  LlmGateway(GatewayConfig config, std::vector<std::unique_ptr<ChatEndpoint>> endpoints)
      : config_(std::move(config)), endpoints_(std::move(endpoints)) {
    if (endpoints_.empty()) fail(ErrorCode::ConfigError, "gateway needs at least one endpoint");
    if (config_.max_retries < 0) fail(ErrorCode::ConfigError, "max_retries must be non-negative");
  }

  [[nodiscard]] const GatewayConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t endpoint_count() const noexcept { return endpoints_.size(); }

  /// k completions for one prompt. The budget is charged exactly k up front;
  /// a retry replaces its failed attempt instead of costing another query.
  std::vector<GenerationSlot> generate(const PromptBundle& bundle, std::size_t k, BudgetLedger& budget,
                                       std::optional<std::uint64_t> route_key = std::nullopt) {
    check_capability(bundle);
    auto grant = budget.reserve(BudgetLedger::Resource::queries, static_cast<std::int64_t>(k));
    return generate(bundle, k, grant, route_key);
  }

  /// Same, drawing from a reservation the caller already holds.
  std::vector<GenerationSlot> generate(const PromptBundle& bundle, std::size_t k, BudgetLedger::Grant& grant,
                                       std::optional<std::uint64_t> route_key = std::nullopt) {
    if (k == 0) fail(ErrorCode::InvalidArgument, "k must be positive");
    const auto capable = check_capability(bundle);
    if (grant.held() < static_cast<std::int64_t>(k)) {
      fail(ErrorCode::BudgetExhausted, "reservation holds fewer than k queries");
    }
    grant.consume(static_cast<std::int64_t>(k));

    const std::uint64_t base = route_key ? *route_key : next_route_.fetch_add(k);
    std::vector<GenerationSlot> slots(k);
    for (std::size_t i = 0; i < k; ++i) {
      auto& slot = slots[i];
      const CompletionParams params{config_.temperature, base + i};
      for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        auto& endpoint = *endpoints_[capable[(base + i + static_cast<std::uint64_t>(attempt)) % capable.size()]];
        slot.endpoint = endpoint.name();
        slot.attempts = attempt + 1;
        try {
          slot.text = endpoint.complete(bundle, params);
          slot.error.clear();
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EndpointFailure) throw;
          slot.error = e.what();
        }
      }
      if (!slot.ok()) {
        slot.error = std::string(to_string(ErrorCode::EndpointFailure)) + " after " +
                     std::to_string(config_.max_retries) + " retries: " + slot.error;
      }
    }
    return slots;
  }

private:
  std::vector<std::size_t> check_capability(const PromptBundle& bundle) const {
    std::vector<std::size_t> capable;
    const bool images = bundle.has_images();
    for (std::size_t i = 0; i < endpoints_.size(); ++i) {
      if (!images || endpoints_[i]->supports_images()) capable.push_back(i);
    }
    if (capable.empty()) fail(ErrorCode::ImageUnsupported, "no configured endpoint accepts images");
    return capable;
  }

  GatewayConfig config_;
  std::vector<std::unique_ptr<ChatEndpoint>> endpoints_;
  std::atomic<std::uint64_t> next_route_{0};
};

} // namespace mles
