#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "llmref/http_transport.hpp"

#include <cstdlib>
#include <regex>

#include <nlohmann/json.hpp>

#include "llmref/error.hpp"

namespace llmref::refgen {

ParsedUrl parse_url(const std::string& url) {
  static const std::regex kUrl(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw InvalidArgument("unsupported endpoint URL '" + url + "'");
  ParsedUrl out;
  out.scheme = m[1].str();
  out.host = m[2].str();
  out.port = m[3].matched ? std::stoi(m[3].str()) : (out.scheme == "https" ? 443 : 80);
  out.path = m[4].matched ? m[4].str() : "";
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string chat_completions_path(const ParsedUrl& url) {
  constexpr std::string_view kSuffix = "/chat/completions";
  if (url.path.size() >= kSuffix.size() &&
      url.path.compare(url.path.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
    return url.path;
  }
  if (url.path.size() >= 3 && url.path.compare(url.path.size() - 3, 3, "/v1") == 0) {
    return url.path + std::string(kSuffix);
  }
  return url.path + "/v1" + std::string(kSuffix);
}

std::string first_choice_content(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponse("message content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponse("response has no choices[0].message.content");
  }
}

struct OpenAiChatTransport::Impl {
  ParsedUrl url;
  std::string path;
  std::string api_key;
  std::chrono::seconds timeout;
};

OpenAiChatTransport::OpenAiChatTransport(std::string endpoint_url, std::string api_key,
                                         std::chrono::seconds timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->url = parse_url(endpoint_url);
  impl_->path = chat_completions_path(impl_->url);
  impl_->api_key = std::move(api_key);
  impl_->timeout = timeout;
}

OpenAiChatTransport::~OpenAiChatTransport() = default;

std::string OpenAiChatTransport::complete(const ChatRequest& request) {
  // One client per call keeps concurrent workers independent.
  httplib::Client client(impl_->url.scheme + "://" + impl_->url.host + ":" + std::to_string(impl_->url.port));
  client.set_connection_timeout(impl_->timeout);
  client.set_read_timeout(impl_->timeout);
  client.set_write_timeout(impl_->timeout);
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  const std::string body = to_wire_json(request).dump();
  auto res = client.Post(impl_->path, headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "request to " + impl_->url.host + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
      throw TransientTransportError(what);
    }
    throw TransportError(what);
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw TransportError("authentication rejected by endpoint (HTTP " + std::to_string(status) + ")");
  }
  if (status == 429 || status >= 500) {
    throw TransientTransportError("endpoint returned HTTP " + std::to_string(status));
  }
  if (status < 200 || status >= 300) {
    throw TransportError("endpoint returned HTTP " + std::to_string(status) + ": " + res->body.substr(0, 300));
  }
  return first_choice_content(res->body);
}

std::unique_ptr<ChatTransport> make_transport(const GenerationConfig& cfg) {
  if (cfg.endpoint_url.rfind("mock://", 0) == 0) return MockTransport::from_url(cfg.endpoint_url);
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw TransportError("API key missing: set the " + cfg.api_key_env + " environment variable");
  }
  return std::make_unique<OpenAiChatTransport>(cfg.endpoint_url, key, cfg.timeout);
}

}  // namespace llmref::refgen
