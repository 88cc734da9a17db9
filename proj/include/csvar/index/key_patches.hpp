#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csvar/patchnet/model.hpp"

namespace csvar {

struct KeyPatch {
  std::size_t patch = 0;  // position in the session's flattened patch list
  std::string user_id;
  Role role = Role::kViewer;
  std::size_t slot = 0;
  double weight = 0.0;              // [CLS] attention
  std::vector<double> embedding;    // refined patch embedding
};

struct KeyPatchSet {
  std::string session_id;
  std::vector<KeyPatch> host;    // non-increasing weight
  std::vector<KeyPatch> viewer;  // non-increasing weight

  // Host patches first, then viewer patches.
  std::vector<const KeyPatch*> all() const;
  std::size_t size() const { return host.size() + viewer.size(); }
};

enum class SelectionPurpose { kIndex, kQuery };

struct SelectionConfig {
  std::size_t max_host = 5;
  std::size_t max_viewer = 3;
  double threshold = 0.5;  // index purpose only: minimum session score
};

// Top patches per role by [CLS] attention. Ties go to the earlier slot, then
// the earlier flattened position. For the index purpose, sessions scored
// below the threshold yield nothing.
std::optional<KeyPatchSet> select_key_patches(const ForwardOutput& fwd, std::span<const PatchMeta> patches,
                                              const std::string& session_id, SelectionPurpose purpose,
                                              const SelectionConfig& cfg = {});

}  // namespace csvar
