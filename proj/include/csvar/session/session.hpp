#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csvar {

enum class ActionType : std::uint8_t {
  // viewer
  kEntry,
  kComment,
  kGift,
  kLike,
  kShare,
  kLeaderboard,
  kGroupJoin,
  kCoStreamRequest,
  // host
  kStreamStart,
  kSpeechTranscript,
  kOcrContent,
};

inline constexpr std::size_t kActionTypeCount = 11;

std::string_view to_string(ActionType type);
// Throws ValidationError on an unknown name.
ActionType parse_action_type(std::string_view name);
bool is_host_action(ActionType type);

enum class Role : std::uint8_t { kHost, kViewer };
std::string_view to_string(Role role);

struct Action {
  std::string user_id;
  double timestamp = 0.0;  // seconds from session start
  ActionType type = ActionType::kComment;
  std::vector<double> text_embedding;  // filled by an embedder; empty until then
  std::string raw_text;
};

struct Session {
  std::string session_id;
  std::string host_id;
  std::vector<std::string> viewer_ids;  // first-appearance order
  std::vector<Action> actions;          // chronological
  std::optional<int> label;

  bool is_host(std::string_view user) const { return user == host_id; }
  Role role_of(std::string_view user) const { return is_host(user) ? Role::kHost : Role::kViewer; }

  // Checks ordering, membership and embedding invariants. `expected_dim` of 0
  // skips the embedding-size check.
  void validate(std::size_t expected_dim = 0) const;
};

// Rebuilds viewer_ids from the actions (every non-host user, first-appearance
// order).
void derive_viewers(Session& session);

}  // namespace csvar
