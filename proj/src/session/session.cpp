#include "csvar/session/session.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "csvar/core/error.hpp"

namespace csvar {
namespace {

constexpr std::array<std::string_view, kActionTypeCount> kTypeNames{
    "entry",         "comment",      "gift",        "like",  "share",
    "leaderboard",   "group_join",   "co_stream_request",
    "stream_start",  "speech_transcript", "ocr_content"};

}  // namespace

std::string_view to_string(ActionType type) { return kTypeNames[static_cast<std::size_t>(type)]; }

ActionType parse_action_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return static_cast<ActionType>(i);
  throw ValidationError("unknown action type: " + std::string(name));
}

bool is_host_action(ActionType type) { return type >= ActionType::kStreamStart; }

std::string_view to_string(Role role) { return role == Role::kHost ? "host" : "viewer"; }

void Session::validate(std::size_t expected_dim) const {
  if (host_id.empty()) throw ValidationError("session " + session_id + ": missing host");
  std::unordered_set<std::string_view> viewers(viewer_ids.begin(), viewer_ids.end());
  if (viewers.size() != viewer_ids.size()) throw ValidationError("session " + session_id + ": duplicate viewer ids");
  if (viewers.contains(host_id)) throw ValidationError("session " + session_id + ": host listed as viewer");
  double prev = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Action& a = actions[i];
    if (!std::isfinite(a.timestamp) || a.timestamp < 0.0)
      throw ValidationError("session " + session_id + ": invalid timestamp");
    if (i > 0 && a.timestamp < prev) throw ValidationError("session " + session_id + ": actions out of order");
    prev = a.timestamp;
    if (static_cast<std::size_t>(a.type) >= kActionTypeCount)
      throw ValidationError("session " + session_id + ": action type out of range");
    if (a.user_id != host_id && !viewers.contains(a.user_id))
      throw ValidationError("session " + session_id + ": action from unknown user " + a.user_id);
    if (expected_dim != 0) {
      if (a.text_embedding.size() != expected_dim)
        throw ValidationError("session " + session_id + ": text embedding has wrong dimension");
      for (double v : a.text_embedding)
        if (!std::isfinite(v)) throw ValidationError("session " + session_id + ": non-finite text embedding");
    }
  }
}

void derive_viewers(Session& session) {
  session.viewer_ids.clear();
  std::unordered_set<std::string> seen;
  for (const Action& a : session.actions) {
    if (a.user_id == session.host_id) continue;
    if (seen.insert(a.user_id).second) session.viewer_ids.push_back(a.user_id);
  }
}

}  // namespace csvar
