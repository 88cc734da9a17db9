#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "csvar/llm/protocol.hpp"
#include "csvar/synth/synthgen.hpp"

namespace csvar::llm {

enum class PromptKind { kSummary, kReasoning };

// The structured request rides along for clients that do not read the text
// (the mock); network clients only use `text`.
struct Prompt {
  PromptKind kind = PromptKind::kReasoning;
  std::string text;
  const SummaryRequest* summary = nullptr;
  const ReasoningRequest* reasoning = nullptr;
};

// Text in, text out. Implementations throw ClientError on transport failure.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const Prompt& prompt) = 0;
  // Part of the cache key, so responses from different models never mix.
  virtual std::string name() const = 0;
};

class MockLlmClient final : public LlmClient {
 public:
  MockLlmClient(const synth::PatchTruth& truth, std::uint64_t seed) : truth_(truth), seed_(seed) {}
  std::string complete(const Prompt& prompt) override;
  std::string name() const override { return "mock-oracle/" + std::to_string(seed_); }

 private:
  const synth::PatchTruth& truth_;
  std::uint64_t seed_;
};

struct HttpClientConfig {
  std::string endpoint;  // full URL of an OpenAI-style chat completions route
  std::string model;
  std::string api_key_env = "CSVAR_LLM_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 2;
};

// POSTs {"model", "messages": [{"role": "user", "content": prompt}],
// "temperature": 0} and returns choices[0].message.content. Transport errors
// and 5xx/429 responses are retried up to max_retries times.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientConfig cfg);
  std::string complete(const Prompt& prompt) override;
  std::string name() const override { return "http/" + cfg_.model; }

 private:
  HttpClientConfig cfg_;
  std::string api_key_;
};

// JSON-lines transcript cache keyed by SHA-256 of (client name, prompt text).
// Hits skip the inner client entirely. Safe for concurrent callers.
class CachedLlmClient final : public LlmClient {
 public:
  CachedLlmClient(LlmClient& inner, std::filesystem::path cache_file);
  std::string complete(const Prompt& prompt) override;
  std::string name() const override { return inner_.name(); }
  std::size_t hits() const;

 private:
  LlmClient& inner_;
  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> cache_;
  std::size_t hits_ = 0;
};

struct BridgeConfig {
  std::size_t parallelism = 4;
  PromptOptions prompt;
};

struct SummaryOutcome {
  std::map<int, std::string> summaries;
  bool fallback = false;  // patch descriptions used verbatim
};

// Each request: one call, one retry with the JSON-only reminder on a parse or
// client error, then the fallback. Results are in request order.
std::vector<SummaryOutcome> summarize_all(LlmClient& client, const std::vector<SummaryRequest>& requests,
                                          const BridgeConfig& cfg = {});
std::vector<LlmJudgment> judge_all(LlmClient& client, const std::vector<ReasoningRequest>& requests,
                                   const BridgeConfig& cfg = {});

}  // namespace csvar::llm
