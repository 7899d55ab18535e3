#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "llmref/refgen.hpp"

namespace llmref::refgen {

struct ParsedUrl {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // without trailing slash
};

ParsedUrl parse_url(const std::string& url);

// Path the request is posted to: the URL path if it already ends in
// "/chat/completions", otherwise <path>/v1/chat/completions.
std::string chat_completions_path(const ParsedUrl& url);

// POST /v1/chat/completions against any OpenAI-compatible server.
class OpenAiChatTransport final : public ChatTransport {
 public:
  OpenAiChatTransport(std::string endpoint_url, std::string api_key, std::chrono::seconds timeout);
  ~OpenAiChatTransport() override;

  std::string complete(const ChatRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Extracts choices[0].message.content from a response body; throws
// MalformedResponse when absent.
std::string first_choice_content(const std::string& body);

// mock:// URLs get a MockTransport; anything else needs an API key in the
// environment variable named by cfg.api_key_env (TransportError otherwise).
std::unique_ptr<ChatTransport> make_transport(const GenerationConfig& cfg);

}  // namespace llmref::refgen
