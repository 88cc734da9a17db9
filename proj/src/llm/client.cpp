#include "csvar/llm/client.hpp"

#include <spdlog/spdlog.h>

#include <fstream>

#include "csvar/core/counters.hpp"
#include "csvar/core/error.hpp"
#include "csvar/core/hash.hpp"
#include "csvar/core/parallel.hpp"
#include "csvar/llm/mock_oracle.hpp"
#include "json.hpp"

namespace csvar::llm {
namespace {

template <typename Parse>
auto call_with_retry(LlmClient& client, Prompt prompt, const std::string& session_id, Parse parse)
    -> std::optional<decltype(parse(std::string()))> {
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return parse(client.complete(prompt));
    } catch (const ParseError& e) {
      spdlog::warn("session {}: unusable LLM response (attempt {}): {}", session_id, attempt + 1, e.what());
    } catch (const ClientError& e) {
      spdlog::warn("session {}: LLM call failed (attempt {}): {}", session_id, attempt + 1, e.what());
    }
    prompt.text += kJsonOnlyReminder;
  }
  return std::nullopt;
}

std::vector<int> ids_of(const auto& patches) {
  std::vector<int> ids;
  for (const auto& p : patches) ids.push_back(p.patch_id);
  return ids;
}

}  // namespace

std::string MockLlmClient::complete(const Prompt& prompt) {
  ++counters::llm_calls();
  if (prompt.kind == PromptKind::kSummary) {
    if (prompt.summary == nullptr) throw ClientError("mock client needs the structured summary request");
    return mock_summary_response(*prompt.summary, truth_, seed_);
  }
  if (prompt.reasoning == nullptr) throw ClientError("mock client needs the structured reasoning request");
  return mock_reasoning_response(*prompt.reasoning, truth_, seed_);
}

CachedLlmClient::CachedLlmClient(LlmClient& inner, std::filesystem::path cache_file)
    : inner_(inner), file_(std::move(cache_file)) {
  std::ifstream in(file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      cache_[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      spdlog::warn("skipping malformed cache line in {}", file_.string());
    }
  }
}

std::string CachedLlmClient::complete(const Prompt& prompt) {
  const std::string key = sha256_hex(inner_.name() + "\n" + prompt.text);
  {
    std::lock_guard lock(mu_);
    if (const auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  std::string response = inner_.complete(prompt);
  std::lock_guard lock(mu_);
  cache_.emplace(key, response);
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::app);
  if (!out) throw IoError("cannot append to LLM cache " + file_.string());
  out << nlohmann::json{{"key", key},
                        {"client", inner_.name()},
                        {"kind", prompt.kind == PromptKind::kSummary ? "summary" : "reasoning"},
                        {"prompt", prompt.text},
                        {"response", response}}
             .dump()
      << '\n';
  return response;
}

std::size_t CachedLlmClient::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::vector<SummaryOutcome> summarize_all(LlmClient& client, const std::vector<SummaryRequest>& requests,
                                          const BridgeConfig& cfg) {
  std::vector<SummaryOutcome> out(requests.size());
  parallel_for(requests.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& req = requests[i];
    const auto ids = ids_of(req.patches);
    Prompt prompt{PromptKind::kSummary, build_summary_prompt(req, cfg.prompt), &req, nullptr};
    auto parsed = call_with_retry(client, std::move(prompt), req.session_id,
                                  [&](const std::string& text) { return parse_summary_response(text, ids); });
    if (parsed) {
      out[i].summaries = std::move(*parsed);
    } else {
      out[i].fallback = true;
      for (const auto& p : req.patches) out[i].summaries[p.patch_id] = p.patch_desc;
    }
  });
  return out;
}

std::vector<LlmJudgment> judge_all(LlmClient& client, const std::vector<ReasoningRequest>& requests,
                                   const BridgeConfig& cfg) {
  std::vector<LlmJudgment> out(requests.size());
  parallel_for(requests.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& req = requests[i];
    const auto ids = ids_of(req.patches);
    Prompt prompt{PromptKind::kReasoning, build_reasoning_prompt(req, cfg.prompt), nullptr, &req};
    auto parsed = call_with_retry(client, std::move(prompt), req.session_id,
                                  [&](const std::string& text) { return parse_reasoning_response(text, ids); });
    if (parsed) {
      out[i] = std::move(*parsed);
      out[i].session_id = req.session_id;
    } else {
      spdlog::warn("session {}: no valid teacher judgment, using the neutral fallback", req.session_id);
      out[i] = fallback_judgment(req);
    }
  });
  return out;
}

}  // namespace csvar::llm
