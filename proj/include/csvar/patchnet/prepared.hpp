#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csvar/session/patch_grid.hpp"
#include "csvar/session/session.hpp"
#include "csvar/synth/text_embedder.hpp"
#include "csvar/tensor/matrix.hpp"

namespace csvar {

struct PatchMeta {
  std::string user_id;
  Role role = Role::kViewer;
  std::size_t slot = 0;
  std::vector<std::size_t> action_indices;  // chronological, into the session's actions
};

// A preprocessed session with everything the model consumes precomputed:
// action-type ids, the text embedding matrix and the patch list in flattened
// order. Patches beyond max_patches are dropped from the tail of that order,
// i.e. the least active viewers' patches go first.
struct PreparedSession {
  Session session;
  std::vector<std::size_t> action_types;
  Matrix text;  // N x d_text
  std::vector<PatchMeta> patches;

  const std::string& id() const { return session.session_id; }
  int label() const { return session.label.value_or(-1); }
  std::size_t action_count() const { return action_types.size(); }
};

PreparedSession prepare_session(const Session& preprocessed, const DiscretizationConfig& cfg,
                                const TextEmbedder& embedder, std::size_t max_patches);

}  // namespace csvar
