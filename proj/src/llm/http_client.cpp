#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "csvar/core/counters.hpp"
#include "csvar/core/error.hpp"
#include "csvar/llm/client.hpp"
#include "json.hpp"

namespace csvar::llm {
namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("LLM endpoint must include a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpLlmClient::HttpLlmClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) throw ConfigError("LLM endpoint is not set");
  if (cfg_.model.empty()) throw ConfigError("LLM model is not set");
  if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpLlmClient::complete(const Prompt& prompt) {
  ++counters::llm_calls();
  const Url url = split_url(cfg_.endpoint);
  httplib::Client cli(url.origin);
  const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const std::string body = nlohmann::json{{"model", cfg_.model},
                                          {"temperature", 0},
                                          {"messages", {{{"role", "user"}, {"content", prompt.text}}}}}
                               .dump();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    auto res = cli.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ClientError("LLM endpoint returned HTTP " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ClientError(std::string("unexpected LLM endpoint payload: ") + e.what());
    }
  }
  throw ClientError("LLM call failed after retries: " + last_error);
}

}  // namespace csvar::llm
