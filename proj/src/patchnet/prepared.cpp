#include "csvar/patchnet/prepared.hpp"

#include <algorithm>

#include "csvar/core/error.hpp"

namespace csvar {

PreparedSession prepare_session(const Session& preprocessed, const DiscretizationConfig& cfg,
                                const TextEmbedder& embedder, std::size_t max_patches) {
  if (preprocessed.actions.empty())
    throw DegenerateSessionError("session " + preprocessed.session_id + " has no actions");
  PreparedSession out;
  out.session = preprocessed;
  const std::size_t n = preprocessed.actions.size();
  out.action_types.reserve(n);
  out.text.resize(n, embedder.dim());
  for (std::size_t i = 0; i < n; ++i) {
    Action& a = out.session.actions[i];
    out.action_types.push_back(static_cast<std::size_t>(a.type));
    if (a.text_embedding.size() != embedder.dim()) a.text_embedding = embedder.embed(a.raw_text);
    std::copy(a.text_embedding.begin(), a.text_embedding.end(), out.text.row(i).begin());
  }
  out.session.validate(embedder.dim());

  const PatchGrid grid = build_patch_grid(out.session, cfg);
  const auto order = flatten_grid(grid);
  const std::size_t keep = std::min(order.size(), std::max<std::size_t>(max_patches, 1));
  out.patches.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const Patch* p = order[i];
    out.patches.push_back(PatchMeta{p->user_id, p->role, p->slot, p->action_indices});
  }
  return out;
}

}  // namespace csvar
