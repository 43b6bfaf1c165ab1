#pragma once

#include <httplib.h>

#include <cstdlib>
#include <functional>
#include <string>

#include "mles/core/hash.hpp"
#include "mles/core/types.hpp"
#include "mles/llm/gateway.hpp"
#include "mles/llm/image_codec.hpp"

namespace mles {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::ConfigError, "base_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

/// OpenAI-compatible chat-completions endpoint. Images are sent inline as
/// base64 data URLs, downscaled to fit the configured size limit.
class HttpChatEndpoint : public ChatEndpoint {
public:
  using ArtifactLoader = std::function<std::string(const std::string& content_ref)>;

  HttpChatEndpoint(EndpointConfig config, ArtifactLoader loader, std::chrono::seconds timeout = std::chrono::seconds{120},
                   std::size_t max_image_bytes = 1u << 20)
      : config_(std::move(config)), loader_(std::move(loader)), timeout_(timeout), max_image_bytes_(max_image_bytes),
        url_(parse_base_url(config_.base_url)) {
    if (!config_.api_key_env_var.empty()) {
      const char* key = std::getenv(config_.api_key_env_var.c_str());
      if (key == nullptr || *key == '\0') {
        fail(ErrorCode::ConfigError, "environment variable " + config_.api_key_env_var + " is not set");
      }
      api_key_ = key;
    }
  }

  [[nodiscard]] std::string name() const override { return config_.model_name + "@" + config_.base_url; }
  [[nodiscard]] bool supports_images() const override { return config_.supports_images; }

  [[nodiscard]] json request_body(const PromptBundle& bundle, const CompletionParams& params) const {
    json content = json::array();
    for (const auto& s : bundle.segments) {
      if (const auto* t = std::get_if<TextSegment>(&s)) {
        content.push_back({{"type", "text"}, {"text", t->text}});
      } else {
        const auto& img = std::get<ImageSegment>(s);
        const auto bytes = fit_png(loader_(img.content_ref), max_image_bytes_);
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(bytes)}}}});
      }
    }
    return {{"model", config_.model_name},
            {"temperature", params.temperature},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  }

  std::string complete(const PromptBundle& bundle, const CompletionParams& params) override {
    httplib::Client client(url_.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto res = client.Post(url_.path + "/chat/completions", headers, request_body(bundle, params).dump(),
                                 "application/json");
    if (!res) fail(ErrorCode::EndpointFailure, "transport error: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      fail(ErrorCode::EndpointFailure, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
      const auto body = json::parse(res->body);
      const auto& content = body.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) fail(ErrorCode::EndpointFailure, "completion content is not a string");
      return content.get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::EndpointFailure, std::string("malformed completion: ") + e.what());
    }
  }

private:
  EndpointConfig config_;
  ArtifactLoader loader_;
  std::chrono::seconds timeout_;
  std::size_t max_image_bytes_;
  ParsedUrl url_;
  std::string api_key_;
};

} // namespace mles
