#include "csvar/index/key_patches.hpp"

#include <algorithm>
#include <numeric>

#include "csvar/core/error.hpp"

namespace csvar {

std::vector<const KeyPatch*> KeyPatchSet::all() const {
  std::vector<const KeyPatch*> out;
  out.reserve(size());
  for (const auto& k : host) out.push_back(&k);
  for (const auto& k : viewer) out.push_back(&k);
  return out;
}

std::optional<KeyPatchSet> select_key_patches(const ForwardOutput& fwd, std::span<const PatchMeta> patches,
                                              const std::string& session_id, SelectionPurpose purpose,
                                              const SelectionConfig& cfg) {
  const std::size_t n = patches.size();
  if (fwd.cls_attention.size() != n || fwd.refined_patches.rows() != n)
    throw ValidationError("select_key_patches: forward output does not match the patch list");
  if (purpose == SelectionPurpose::kIndex && fwd.session_score < cfg.threshold) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (fwd.cls_attention[a] != fwd.cls_attention[b]) return fwd.cls_attention[a] > fwd.cls_attention[b];
    if (patches[a].slot != patches[b].slot) return patches[a].slot < patches[b].slot;
    return a < b;
  });

  KeyPatchSet out;
  out.session_id = session_id;
  for (std::size_t i : order) {
    auto& bucket = patches[i].role == Role::kHost ? out.host : out.viewer;
    const std::size_t cap = patches[i].role == Role::kHost ? cfg.max_host : cfg.max_viewer;
    if (bucket.size() >= cap) continue;
    const auto row = fwd.refined_patches.row(i);
    bucket.push_back(KeyPatch{i, patches[i].user_id, patches[i].role, patches[i].slot, fwd.cls_attention[i],
                              std::vector<double>(row.begin(), row.end())});
  }
  return out;
}

}  // namespace csvar
