#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csvar/patchnet/prepared.hpp"
#include "csvar/session/session.hpp"

namespace csvar::llm {

inline constexpr std::size_t kMaxPromptPatches = 8;

// user_id and slot are oracle-side metadata; only patch_id and the text are
// serialized into prompts.
struct SummaryPatch {
  int patch_id = 0;
  std::string patch_desc;
  std::string user_id;
  std::size_t slot = 0;
};

struct SummaryRequest {
  std::string session_id;
  std::vector<SummaryPatch> patches;
};

struct ReasoningPatch {
  int patch_id = 0;
  std::string query_patch;
  std::string similar_patch_ai_summary;  // empty when no neighbor was retrieved
  std::string user_id;
  std::size_t slot = 0;
};

struct ReasoningRequest {
  std::string session_id;
  std::vector<ReasoningPatch> patches;
};

enum class RiskType { kNormal, kFraud, kGambling, kSexual };
std::string_view to_string(RiskType type);
RiskType parse_risk_type(std::string_view name);  // throws ParseError

struct PatchJudgment {
  int patch_id = 0;
  double risk_score = 0.0;
  double saliency = 0.0;
  std::string explanation;
};

struct LlmJudgment {
  std::string session_id;
  std::vector<PatchJudgment> patches;  // request order
  std::string session_summary;
  double overall_risk_score = 0.0;
  RiskType primary_risk_type = RiskType::kNormal;
  bool coordination_indicators = false;
  // Set by the fallback path when no valid response was obtained.
  bool teacher_missing = false;
};

struct PromptOptions {
  double window_seconds = 100.0;  // time-window length quoted in the instructions
};

// Text for one patch: role, user, slot window, then each action as
// "[mm:ss type] text".
std::string describe_patch(const Session& session, const PatchMeta& patch, double slot_width);

// Throw ValidationError for an empty list, more than 8 patches, or ids that
// are not unique and positive.
void validate(const SummaryRequest& req);
void validate(const ReasoningRequest& req);

std::string build_summary_prompt(const SummaryRequest& req, const PromptOptions& opt = {});
std::string build_reasoning_prompt(const ReasoningRequest& req, const PromptOptions& opt = {});

// First balanced JSON object or array in the text. Throws ParseError if there
// is none.
std::string extract_json(std::string_view text);

// patch_id -> summary. Accepts a top-level array or an object with "patches";
// each item carries "summary" or, failing that, "explanation". patch_id may be
// a number or a numeric string.
std::map<int, std::string> parse_summary_response(std::string_view text, const std::vector<int>& expected_ids);

// Scores must be numbers in [0, 1]; nothing is clamped.
LlmJudgment parse_reasoning_response(std::string_view text, const std::vector<int>& expected_ids);

// Appended to the prompt for the single retry after a parse failure.
inline constexpr std::string_view kJsonOnlyReminder =
    "\n\nRespond with JSON only, exactly in the output format above, with no other text.";

// Neutral stand-in used when both attempts fail.
LlmJudgment fallback_judgment(const ReasoningRequest& req);

}  // namespace csvar::llm
