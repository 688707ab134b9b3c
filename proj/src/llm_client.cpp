#include <textim/llm_client.hpp>

#include "httplib.h"
#include "json.hpp"

#include <cstdlib>

namespace textim {

std::string FixtureClient::complete(const std::string& prompt) {
  prompts_.push_back(prompt);
  int index = calls_++;
  if (index >= static_cast<int>(responses_.size()))
    throw ExternalServiceError("fixture script exhausted after " +
                               std::to_string(index) + " calls");
  if (!responses_[index])
    throw ExternalServiceError("scripted transport failure on call " +
                               std::to_string(index + 1));
  return *responses_[index];
}

std::string HttpChatClient::complete(const std::string& prompt) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw ExternalServiceError("environment variable " + config_.api_key_env +
                               " is not set");

  nlohmann::json body = {
      {"model", config_.model},
      {"temperature", config_.temperature},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
  };

  httplib::Client client(config_.host);
  client.set_connection_timeout(config_.timeout_sec, 0);
  client.set_read_timeout(config_.timeout_sec, 0);
  client.set_default_headers({{"Authorization", std::string("Bearer ") + key}});

  httplib::Result res =
      client.Post(config_.path, body.dump(), "application/json");
  if (!res)
    throw ExternalServiceError("chat request to " + config_.host +
                               " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ExternalServiceError("chat request returned status " +
                               std::to_string(res->status) + ": " +
                               res->body.substr(0, 200));

  nlohmann::json payload =
      nlohmann::json::parse(res->body, nullptr, /*allow_exceptions=*/false);
  if (payload.is_discarded() || !payload.contains("choices") ||
      payload["choices"].empty() ||
      !payload["choices"][0].contains("message") ||
      !payload["choices"][0]["message"].contains("content"))
    throw ExternalServiceError("malformed chat completion payload");

  return payload["choices"][0]["message"]["content"].get<std::string>();
}

}  // namespace textim
