#include "csvar/llm/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "csvar/core/error.hpp"
#include "json.hpp"

namespace csvar::llm {
namespace {

using ordered = nlohmann::ordered_json;

constexpr std::string_view kSummaryHead =
    R"(You are a senior risk control expert with ten years of experience countering underground black-market operations. You understand that malicious actors rarely expose themselves directly. Instead, they use a variety of covert tactics to carry out fraud, gambling, and sexual-content redirection.

Below are multiple user behavior patches from the same live stream (not exhaustive). Each patch represents the sequence of actions by a single user (the host or a viewer) within a {WINDOW}-second time window. These patches originate from the same live session and may include carefully designed coordinated behavior.

Your task: act like a real risk control expert. From subtle traces, detect anomalies and identify behavior patterns that appear normal on the surface but are suspicious.

Guidelines for identifying covert risks:

1. Covert fraud behaviors: Scripted language masking using words such as "benefits", "discounts", "insider information" instead of explicit scam language; temporal dispersion to avoid concentrated operations; content dilution hiding one or two key guiding messages inside normal content.

2. Covert gambling behaviors: Euphemism system using codewords like "drive", "get on", "arrive" to refer to gambling; platform redirect to third-party platforms before gambling; game disguises such as "game trials", "predictions", "mystery box openings", "stone gambling", "cockfighting".

3. Sexual-content redirection behaviors: Implicit marketing like "special services", "private benefits", "one-on-one"; multi-platform coordination with hints in live session but actions elsewhere; identity packaging as "model", "host assistant", or "agent"; time-lag operations building trust then gradually guiding users toward prohibited content.

4. Behavior pattern recognition: Abnormal frequency, timing, or action combinations forming a violation chain.

5. Language pattern recognition: Over-enthusiasm to quickly build trust, creating urgency with "limited time" or "limited slots", authority packaging by impersonating official staff or professionals.

Analysis requirements: For each patch, perform in-depth analysis (beyond literal text), recognize patterns, analyze correlations between patches, and provide a risk score 0.0–1.0 with detailed explanation.

Input format
{
  "session_id": "xxx",
  "patches": [
    {"patch_id": 1, "patch_desc": "host spoke 4 times at 00:29: ..."},
    {"patch_id": 2, "patch_desc": "host ..."}
  ]
}

Strict output format
{
  "session_id": "session_12345",
  "patches": [
    {"patch_id": 1, "risk_score": 0.8, "explanation": "..."},
    {"patch_id": 2, "risk_score": 0.4, "explanation": "..."}
  ],
  "session_summary": "...",
  "overall_risk_score": 0.9,
  "primary_risk_type": "fraud",
  "coordination_indicators": true
}

The live streaming session for this query is provided below:
)";

constexpr std::string_view kReasoningHead =
    R"(You are a senior live streaming risk control expert with ten years of experience countering underground black-market operations. Malicious actors rarely expose themselves directly; they use covert tactics for fraud, gambling, or sexual-content redirection.

Below are multiple user behavior patches from the same live stream (not exhaustive). Each patch represents the actions of a single user within a {WINDOW}-second time window, potentially with coordinated behavior.

Your task: Independently analyze the query patch, compare with AI-summarized similar patches, and produce a strict JSON judgment.

Analysis Principles:
1) Independent analysis of the query patch always comes first;
2) AI summaries are only secondary references;
3) Base final decisions on the query patch, but note differences with similar patches;
4) Assign a saliency score (0.0–1.0) for each patch reflecting weight in overall risk, based on behavioral chain, frequency, coordination, and violation patterns.

Key Risk Indicators:
Fraud: scripted disguises (e.g., "benefits", "discounts"), content dilution, temporal dispersion.
Gambling: coded language ("drive", "get on", "arrive"), platform redirection, game disguises ("mystery boxes", "predictions", "stone gambling").
Sexual redirection: implicit marketing ("special services", "one-on-one"), multi-platform operation, identity packaging ("model", "assistant", "agent").
Behavioral/language patterns: abnormal frequency, timing, or combinations; over-enthusiasm, urgency, authority signals; coordinated behavior among patches.

Input format
{
  "session_id": "xxx",
  "patches": [
    {"patch_id": 1, "query_patch": "...", "similar_patch_ai_summary": "..."},
    {"patch_id": 2, "query_patch": "...", "similar_patch_ai_summary": "..."}
  ]
}

Output format (strict JSON)
{
  "session_id": "xxx",
  "patches": [
    {"patch_id": 1, "risk_score": 0.0, "saliency": 0.0, "explanation": "..."}
  ],
  "session_summary": "...",
  "overall_risk_score": 0.0,
  "primary_risk_type": "fraud | gambling | sexual | normal",
  "coordination_indicators": false
}

Reminders: Independent analysis has priority. Explanations must distinguish independent findings vs. similar patch references. Focus on patterns, abnormal frequencies, and potential coordination. Use behavioral chain logic (actions -> results -> risks). Strictly follow output constraints: 'overall_risk_score' 0.0–1.0, 'primary_risk_type' from [normal, fraud, gambling, sexual], 'saliency' 0.0–1.0 per patch.

The live streaming session for this query is provided below:
)";

std::string format_window(double seconds) {
  char buf[32];
  if (seconds == std::floor(seconds)) std::snprintf(buf, sizeof(buf), "%.0f", seconds);
  else std::snprintf(buf, sizeof(buf), "%g", seconds);
  return buf;
}

std::string render_head(std::string_view head, const PromptOptions& opt) {
  std::string out(head);
  const std::string key = "{WINDOW}";
  const auto pos = out.find(key);
  out.replace(pos, key.size(), format_window(opt.window_seconds));
  return out;
}

std::string clock(double seconds) {
  const int s = static_cast<int>(std::clamp(std::floor(seconds), 0.0, 359999.0));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", s / 60, s % 60);
  return buf;
}

template <typename Patches>
void validate_ids(const std::string& session_id, const Patches& patches) {
  if (patches.empty()) throw ValidationError("prompt request for " + session_id + " has no patches");
  if (patches.size() > kMaxPromptPatches)
    throw ValidationError("prompt request for " + session_id + " has more than 8 patches");
  std::set<int> seen;
  for (const auto& p : patches) {
    if (p.patch_id < 1) throw ValidationError("patch ids must be positive");
    if (!seen.insert(p.patch_id).second) throw ValidationError("duplicate patch id " + std::to_string(p.patch_id));
  }
}

int read_patch_id(const nlohmann::json& item) {
  const auto& id = item.at("patch_id");
  if (id.is_number_integer()) return id.get<int>();
  if (id.is_string()) {
    const auto s = id.get<std::string>();
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      throw ParseError("non-numeric patch_id: " + s);
    }
    if (used != s.size()) throw ParseError("non-numeric patch_id: " + s);
    return v;
  }
  throw ParseError("patch_id must be a number or numeric string");
}

double unit_score(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing ") + key);
  if (!it->is_number()) throw ParseError(std::string(key) + " must be a number");
  const double v = it->get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw ParseError(std::string(key) + " outside [0, 1]");
  return v;
}

nlohmann::json parse_json(std::string_view text) {
  const std::string body = extract_json(text);
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON in response: ") + e.what());
  }
}

void check_complete(const std::set<int>& got, const std::vector<int>& expected) {
  const std::set<int> want(expected.begin(), expected.end());
  for (int id : want)
    if (!got.count(id)) throw ParseError("response is missing patch " + std::to_string(id));
  for (int id : got)
    if (!want.count(id)) throw ParseError("response has unexpected patch " + std::to_string(id));
}

}  // namespace

std::string_view to_string(RiskType type) {
  switch (type) {
    case RiskType::kNormal:
      return "normal";
    case RiskType::kFraud:
      return "fraud";
    case RiskType::kGambling:
      return "gambling";
    case RiskType::kSexual:
      return "sexual";
  }
  return "normal";
}

RiskType parse_risk_type(std::string_view name) {
  for (auto t : {RiskType::kNormal, RiskType::kFraud, RiskType::kGambling, RiskType::kSexual})
    if (to_string(t) == name) return t;
  throw ParseError("unknown primary_risk_type: " + std::string(name));
}

std::string describe_patch(const Session& session, const PatchMeta& patch, double slot_width) {
  const double lo = static_cast<double>(patch.slot - 1) * slot_width;
  std::string out = std::string(to_string(patch.role)) + " " + patch.user_id + " performed " +
                    std::to_string(patch.action_indices.size()) +
                    (patch.action_indices.size() == 1 ? " action" : " actions") + " between " + clock(lo) + " and " +
                    clock(lo + slot_width) + ":";
  for (std::size_t i : patch.action_indices) {
    const Action& a = session.actions.at(i);
    out += " [" + clock(a.timestamp) + " " + std::string(to_string(a.type)) + "]";
    if (!a.raw_text.empty()) out += " " + a.raw_text;
    out += ";";
  }
  out.pop_back();
  return out;
}

void validate(const SummaryRequest& req) { validate_ids(req.session_id, req.patches); }
void validate(const ReasoningRequest& req) { validate_ids(req.session_id, req.patches); }

std::string build_summary_prompt(const SummaryRequest& req, const PromptOptions& opt) {
  validate(req);
  ordered body{{"session_id", req.session_id}, {"patches", ordered::array()}};
  for (const auto& p : req.patches) body["patches"].push_back({{"patch_id", p.patch_id}, {"patch_desc", p.patch_desc}});
  return render_head(kSummaryHead, opt) + body.dump(2) + "\n";
}

std::string build_reasoning_prompt(const ReasoningRequest& req, const PromptOptions& opt) {
  validate(req);
  ordered body{{"session_id", req.session_id}, {"patches", ordered::array()}};
  for (const auto& p : req.patches)
    body["patches"].push_back({{"patch_id", p.patch_id},
                               {"query_patch", p.query_patch},
                               {"similar_patch_ai_summary", p.similar_patch_ai_summary}});
  return render_head(kReasoningHead, opt) + body.dump(2) + "\n";
}

std::string extract_json(std::string_view text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{' && text[start] != '[') continue;
    std::vector<char> stack;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{' || c == '[') {
        stack.push_back(c == '{' ? '}' : ']');
      } else if (c == '}' || c == ']') {
        if (stack.empty() || stack.back() != c) break;
        stack.pop_back();
        if (stack.empty()) return std::string(text.substr(start, i - start + 1));
      }
    }
  }
  throw ParseError("no JSON object or array found in response");
}

std::map<int, std::string> parse_summary_response(std::string_view text, const std::vector<int>& expected_ids) {
  const auto j = parse_json(text);
  const nlohmann::json* items = nullptr;
  if (j.is_array()) items = &j;
  else if (j.is_object() && j.contains("patches") && j["patches"].is_array()) items = &j["patches"];
  else throw ParseError("summary response has no patch list");

  std::map<int, std::string> out;
  std::set<int> seen;
  try {
    for (const auto& item : *items) {
      if (!item.is_object()) throw ParseError("patch entry is not an object");
      const int id = read_patch_id(item);
      if (!seen.insert(id).second) throw ParseError("patch " + std::to_string(id) + " answered twice");
      const char* key = item.contains("summary") ? "summary" : "explanation";
      if (!item.contains(key) || !item[key].is_string())
        throw ParseError("patch " + std::to_string(id) + " lacks a summary string");
      out[id] = item[key].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("summary response: ") + e.what());
  }
  check_complete(seen, expected_ids);
  return out;
}

LlmJudgment parse_reasoning_response(std::string_view text, const std::vector<int>& expected_ids) {
  const auto j = parse_json(text);
  if (!j.is_object()) throw ParseError("reasoning response must be a JSON object");
  LlmJudgment out;
  try {
    if (j.contains("session_id") && j["session_id"].is_string()) out.session_id = j["session_id"].get<std::string>();
    if (!j.contains("patches") || !j["patches"].is_array()) throw ParseError("reasoning response has no patch list");
    std::map<int, PatchJudgment> by_id;
    for (const auto& item : j["patches"]) {
      if (!item.is_object()) throw ParseError("patch entry is not an object");
      PatchJudgment pj;
      pj.patch_id = read_patch_id(item);
      pj.risk_score = unit_score(item, "risk_score");
      pj.saliency = unit_score(item, "saliency");
      if (item.contains("explanation")) {
        if (!item["explanation"].is_string()) throw ParseError("explanation must be a string");
        pj.explanation = item["explanation"].get<std::string>();
      }
      if (!by_id.emplace(pj.patch_id, pj).second)
        throw ParseError("patch " + std::to_string(pj.patch_id) + " answered twice");
    }
    std::set<int> seen;
    for (const auto& [id, _] : by_id) seen.insert(id);
    check_complete(seen, expected_ids);
    for (int id : expected_ids) out.patches.push_back(by_id.at(id));

    out.overall_risk_score = unit_score(j, "overall_risk_score");
    if (!j.contains("primary_risk_type") || !j["primary_risk_type"].is_string())
      throw ParseError("primary_risk_type must be a string");
    out.primary_risk_type = parse_risk_type(j["primary_risk_type"].get<std::string>());
    if (!j.contains("coordination_indicators") || !j["coordination_indicators"].is_boolean())
      throw ParseError("coordination_indicators must be a boolean");
    out.coordination_indicators = j["coordination_indicators"].get<bool>();
    if (j.contains("session_summary")) {
      if (!j["session_summary"].is_string()) throw ParseError("session_summary must be a string");
      out.session_summary = j["session_summary"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("reasoning response: ") + e.what());
  }
  return out;
}

LlmJudgment fallback_judgment(const ReasoningRequest& req) {
  LlmJudgment out;
  out.session_id = req.session_id;
  const double sal = req.patches.empty() ? 0.0 : 1.0 / static_cast<double>(req.patches.size());
  for (const auto& p : req.patches) out.patches.push_back({p.patch_id, 0.5, sal, "no valid teacher response"});
  out.overall_risk_score = 0.5;
  out.teacher_missing = true;
  return out;
}

}  // namespace csvar::llm
