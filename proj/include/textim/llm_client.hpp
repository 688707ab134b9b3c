#pragma once

#include <textim/types.hpp>

#include <optional>
#include <string>
#include <vector>

namespace textim {

// One prompt in, one completion out. Implementations throw
// ExternalServiceError on transport or configuration failure.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Replays a scripted response list. A nullopt entry simulates a transport
// failure; running past the end of the script fails too.
class FixtureClient : public LlmClient {
 public:
  explicit FixtureClient(std::vector<std::optional<std::string>> responses)
      : responses_(std::move(responses)) {}

  std::string complete(const std::string& prompt) override;

  int calls() const { return calls_; }
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::vector<std::optional<std::string>> responses_;
  std::vector<std::string> prompts_;
  int calls_ = 0;
};

struct HttpChatConfig {
  std::string host = "https://api.openai.com";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "TEXTIM_API_KEY";
  double temperature = 0.0;
  int timeout_sec = 30;
};

// Chat-completion client speaking the standard wire shape:
// request {model, temperature, messages:[{role:"user", content}]},
// response {choices:[{message:{content}}]}. The key is read from the
// configured environment variable on every call.
class HttpChatClient : public LlmClient {
 public:
  explicit HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {}

  std::string complete(const std::string& prompt) override;

  const HttpChatConfig& config() const { return config_; }

 private:
  HttpChatConfig config_;
};

}  // namespace textim
