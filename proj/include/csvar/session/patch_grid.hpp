#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "csvar/session/session.hpp"

namespace csvar {

struct DiscretizationConfig {
  double horizon = 1800.0;     // T, seconds
  double slot_width = 100.0;   // delta t, seconds

  // Throws ConfigError unless T > 0, dt > 0 and T is a whole multiple of dt.
  void validate() const;
  std::size_t slot_count() const;
};

// 1-based slot k with t in [(k-1)dt, k dt). t == T maps to the last slot.
std::size_t slot_of(double timestamp, const DiscretizationConfig& cfg);

struct PreprocessConfig {
  double horizon = 1800.0;
  std::size_t max_viewers = 50;
  std::size_t max_actions = 2096;
};

// Truncates to the horizon, keeps the most active viewers (ties by first
// appearance) and caps the action count, earliest first. The host is never
// dropped. Throws DegenerateSessionError when nothing remains.
Session preprocess(const Session& session, const PreprocessConfig& cfg);

struct PatchKey {
  std::string user_id;
  std::size_t slot = 0;
  auto operator<=>(const PatchKey&) const = default;
};

struct Patch {
  std::string user_id;
  std::size_t slot = 0;  // 1-based
  Role role = Role::kViewer;
  std::vector<std::size_t> action_indices;  // into Session::actions, chronological
};

struct UserActivity {
  std::size_t action_count = 0;
  std::size_t first_action = 0;
};

class PatchGrid {
 public:
  std::string session_id;
  std::string host_id;
  std::size_t slot_count = 0;
  std::map<PatchKey, Patch> patches;
  std::map<std::string, UserActivity> activity;

  std::size_t total_actions() const;
  const Patch* find(const std::string& user, std::size_t slot) const;
};

PatchGrid build_patch_grid(const Session& session, const DiscretizationConfig& cfg);

// Host patches by slot, then viewers by descending activity (ties by first
// appearance), each by slot. Throws DegenerateSessionError on an empty grid.
std::vector<const Patch*> flatten_grid(const PatchGrid& grid);

}  // namespace csvar
