#pragma once

#include <array>
#include <span>

#include "csvar/patchnet/prepared.hpp"
#include "csvar/tensor/autograd.hpp"
#include "csvar/tensor/matrix.hpp"

namespace csvar {

// Relation order used for the fusion weights.
enum class Relation : std::size_t { kTemporal = 0, kUser = 1, kRole = 2, kAuxiliary = 3 };
inline constexpr std::size_t kRelationCount = 4;

struct RelationMatrices {
  Matrix temporal;   // slots at most one apart
  Matrix user;       // same user
  Matrix role;       // exactly one endpoint is the host
  Matrix auxiliary;  // affinity not covered by the three structural relations

  const Matrix& operator[](Relation r) const;
};

// Cosine similarity mapped to [0, 1] as (1 + cos) / 2. A zero vector has
// cosine 0 with everything.
double patch_similarity(std::span<const double> a, std::span<const double> b);

// embeddings: n x d in the same order as `patches`.
RelationMatrices build_relation_adjacency(const Matrix& embeddings, std::span<const PatchMeta> patches);

// Weighted sum of the four relations, a zero [CLS] row and column prepended,
// then a softmax over each row. Result is (n + 1) x (n + 1), row-stochastic.
Matrix fuse_adjacency(const RelationMatrices& rel, const std::array<double, kRelationCount>& weights);

// Differentiable version of build + fuse: gradients flow into the patch
// embeddings (through the similarity) and the 1 x 4 relation weights.
ag::Var relation_bias(ag::Tape& tape, ag::Var embeddings, std::span<const PatchMeta> patches, ag::Var weights);

}  // namespace csvar
