#include "csvar/session/patch_grid.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "csvar/core/error.hpp"

namespace csvar {

void DiscretizationConfig::validate() const {
  if (!(horizon > 0.0) || !(slot_width > 0.0)) throw ConfigError("discretization: T and dt must be positive");
  const double k = horizon / slot_width;
  if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
    throw ConfigError("discretization: T must be an integer multiple of dt");
}

std::size_t DiscretizationConfig::slot_count() const {
  return static_cast<std::size_t>(std::llround(horizon / slot_width));
}

std::size_t slot_of(double timestamp, const DiscretizationConfig& cfg) {
  if (!(timestamp >= 0.0) || timestamp > cfg.horizon)
    throw OutOfRangeError("timestamp " + std::to_string(timestamp) + " outside [0, T]");
  const std::size_t k = cfg.slot_count();
  const auto slot = static_cast<std::size_t>(std::floor(timestamp / cfg.slot_width)) + 1;
  return std::min(slot, k);
}

Session preprocess(const Session& session, const PreprocessConfig& cfg) {
  Session out;
  out.session_id = session.session_id;
  out.host_id = session.host_id;
  out.label = session.label;

  std::vector<const Action*> kept;
  kept.reserve(session.actions.size());
  for (const Action& a : session.actions)
    if (a.timestamp <= cfg.horizon) kept.push_back(&a);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Action* a, const Action* b) { return a->timestamp < b->timestamp; });

  struct Rank {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Rank> ranks;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::string& u = kept[i]->user_id;
    if (u == session.host_id) continue;
    auto [it, inserted] = ranks.try_emplace(u, Rank{0, i});
    if (inserted) order.push_back(u);
    ++it->second.count;
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const Rank& ra = ranks.at(a);
    const Rank& rb = ranks.at(b);
    if (ra.count != rb.count) return ra.count > rb.count;
    return ra.first < rb.first;
  });
  if (order.size() > cfg.max_viewers) order.resize(cfg.max_viewers);
  const std::unordered_set<std::string> allowed(order.begin(), order.end());

  for (const Action* a : kept) {
    if (out.actions.size() >= cfg.max_actions) break;
    if (a->user_id == session.host_id || allowed.contains(a->user_id)) out.actions.push_back(*a);
  }
  if (out.actions.empty()) throw DegenerateSessionError("session " + session.session_id + " has no actions left");
  derive_viewers(out);
  return out;
}

std::size_t PatchGrid::total_actions() const {
  std::size_t n = 0;
  for (const auto& [key, patch] : patches) n += patch.action_indices.size();
  return n;
}

const Patch* PatchGrid::find(const std::string& user, std::size_t slot) const {
  auto it = patches.find(PatchKey{user, slot});
  return it == patches.end() ? nullptr : &it->second;
}

PatchGrid build_patch_grid(const Session& session, const DiscretizationConfig& cfg) {
  cfg.validate();
  PatchGrid grid;
  grid.session_id = session.session_id;
  grid.host_id = session.host_id;
  grid.slot_count = cfg.slot_count();
  for (std::size_t i = 0; i < session.actions.size(); ++i) {
    const Action& a = session.actions[i];
    const std::size_t slot = slot_of(a.timestamp, cfg);
    auto [it, inserted] = grid.patches.try_emplace(PatchKey{a.user_id, slot});
    if (inserted) {
      it->second.user_id = a.user_id;
      it->second.slot = slot;
      it->second.role = session.role_of(a.user_id);
    }
    it->second.action_indices.push_back(i);
    auto [act, first] = grid.activity.try_emplace(a.user_id, UserActivity{0, i});
    ++act->second.action_count;
  }
  return grid;
}

std::vector<const Patch*> flatten_grid(const PatchGrid& grid) {
  if (grid.patches.empty()) throw DegenerateSessionError("session " + grid.session_id + " has an empty patch grid");
  std::vector<const Patch*> out;
  out.reserve(grid.patches.size());
  for (const auto& [key, patch] : grid.patches) out.push_back(&patch);
  std::sort(out.begin(), out.end(), [&](const Patch* a, const Patch* b) {
    const bool ha = a->role == Role::kHost;
    const bool hb = b->role == Role::kHost;
    if (ha != hb) return ha;
    if (a->user_id != b->user_id) {
      const UserActivity& ua = grid.activity.at(a->user_id);
      const UserActivity& ub = grid.activity.at(b->user_id);
      if (ua.action_count != ub.action_count) return ua.action_count > ub.action_count;
      return ua.first_action < ub.first_action;
    }
    return a->slot < b->slot;
  });
  return out;
}

}  // namespace csvar
