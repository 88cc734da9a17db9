#include "csvar/patchnet/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "csvar/simd/kernels.hpp"

namespace csvar {
namespace {

bool temporal_link(const PatchMeta& a, const PatchMeta& b) {
  const std::size_t gap = a.slot > b.slot ? a.slot - b.slot : b.slot - a.slot;
  return gap <= 1;
}

bool user_link(const PatchMeta& a, const PatchMeta& b) { return a.user_id == b.user_id; }

bool role_link(const PatchMeta& a, const PatchMeta& b) {
  return (a.role == Role::kHost) != (b.role == Role::kHost);
}

// Row-normalized copy plus the original norms (0 rows stay 0).
Matrix normalize_rows(const Matrix& m, std::vector<double>& norms) {
  Matrix out = m;
  norms.assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double nrm = std::sqrt(simd::dot(m.data() + r * m.cols(), m.data() + r * m.cols(), m.cols()));
    norms[r] = nrm;
    if (nrm > 0.0) simd::scale(1.0 / nrm, out.data() + r * m.cols(), m.cols());
  }
  return out;
}

}  // namespace

const Matrix& RelationMatrices::operator[](Relation r) const {
  switch (r) {
    case Relation::kTemporal:
      return temporal;
    case Relation::kUser:
      return user;
    case Relation::kRole:
      return role;
    case Relation::kAuxiliary:
      return auxiliary;
  }
  throw std::out_of_range("relation");
}

double patch_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(simd::dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(simd::dot(b.data(), b.data(), b.size()));
  const double cos = (na > 0.0 && nb > 0.0) ? simd::dot(a.data(), b.data(), a.size()) / (na * nb) : 0.0;
  return 0.5 * (1.0 + cos);
}

RelationMatrices build_relation_adjacency(const Matrix& embeddings, std::span<const PatchMeta> patches) {
  const std::size_t n = patches.size();
  if (embeddings.rows() != n) throw std::invalid_argument("adjacency: embeddings/patches size mismatch");
  RelationMatrices rel{Matrix(n, n), Matrix(n, n), Matrix(n, n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = patch_similarity(embeddings.row(i), embeddings.row(j));
      const double t = temporal_link(patches[i], patches[j]) ? s : 0.0;
      const double u = user_link(patches[i], patches[j]) ? s : 0.0;
      const double r = role_link(patches[i], patches[j]) ? s : 0.0;
      rel.temporal(i, j) = t;
      rel.user(i, j) = u;
      rel.role(i, j) = r;
      rel.auxiliary(i, j) = std::max(0.0, s - std::max({t, u, r}));
    }
  }
  return rel;
}

Matrix fuse_adjacency(const RelationMatrices& rel, const std::array<double, kRelationCount>& weights) {
  const std::size_t n = rel.temporal.rows();
  Matrix fused(n + 1, n + 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t z = 0; z < kRelationCount; ++z) v += weights[z] * rel[static_cast<Relation>(z)](i, j);
      fused(i + 1, j + 1) = v;
    }
  softmax_rows(fused);
  return fused;
}

ag::Var relation_bias(ag::Tape& tape, ag::Var embeddings, std::span<const PatchMeta> patches, ag::Var weights) {
  const Matrix& p = tape.value(embeddings);
  const Matrix& w = tape.value(weights);
  const std::size_t n = patches.size();
  if (p.rows() != n) throw std::invalid_argument("relation_bias: embeddings/patches size mismatch");
  if (w.size() != kRelationCount) throw std::invalid_argument("relation_bias: expects 4 relation weights");

  // Masks: the three structural gates and the residual (no gate) indicator.
  // With similarities in [0, 1] the residual relation is exactly S on
  // ungated pairs and 0 elsewhere.
  std::vector<Matrix> masks(kRelationCount, Matrix(n, n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool t = temporal_link(patches[i], patches[j]);
      const bool u = user_link(patches[i], patches[j]);
      const bool r = role_link(patches[i], patches[j]);
      masks[0](i, j) = t;
      masks[1](i, j) = u;
      masks[2](i, j) = r;
      masks[3](i, j) = !(t || u || r);
    }
  std::vector<double> norms;
  Matrix unit = normalize_rows(p, norms);
  Matrix sim = matmul_nt(unit, unit);
  for (double& v : sim.storage()) v = 0.5 * (1.0 + v);
  Matrix gate(n, n);
  for (std::size_t z = 0; z < kRelationCount; ++z) simd::axpy(w.data()[z], masks[z].data(), gate.data(), n * n);

  Matrix fused(n + 1, n + 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) fused(i + 1, j + 1) = sim(i, j) * gate(i, j);
  softmax_rows(fused);

  return tape.record(
      std::move(fused), {embeddings, weights},
      [embeddings, weights, masks = std::move(masks), unit = std::move(unit), norms = std::move(norms),
       sim = std::move(sim), gate = std::move(gate)](ag::Tape& t, ag::Var self) {
        const Matrix& a = t.value(self);
        const Matrix& g = t.grad(self);
        const std::size_t m = a.rows();
        const std::size_t n = m - 1;
        Matrix dpre(n, n);
        for (std::size_t r = 1; r < m; ++r) {
          const double inner = simd::dot(g.data() + r * m, a.data() + r * m, m);
          for (std::size_t c = 1; c < m; ++c) dpre(r - 1, c - 1) = a(r, c) * (g(r, c) - inner);
        }
        if (t.needs_grad(weights)) {
          Matrix& gw = t.grad(weights);
          for (std::size_t z = 0; z < kRelationCount; ++z) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n * n; ++k) acc += dpre.data()[k] * masks[z].data()[k] * sim.data()[k];
            gw.data()[z] += acc;
          }
        }
        if (!t.needs_grad(embeddings)) return;
        // dS = dpre * gate; cos = 2S - 1 so dC = dS / 2; C = U U^T.
        Matrix dcos(n, n);
        for (std::size_t k = 0; k < n * n; ++k) dcos.data()[k] = 0.5 * dpre.data()[k] * gate.data()[k];
        Matrix sym = dcos;
        sym += dcos.transposed();
        const Matrix du = matmul(sym, unit);
        Matrix& gp = t.grad(embeddings);
        const std::size_t d = unit.cols();
        for (std::size_t i = 0; i < n; ++i) {
          if (norms[i] == 0.0) continue;
          const double proj = simd::dot(du.data() + i * d, unit.data() + i * d, d);
          for (std::size_t c = 0; c < d; ++c) gp(i, c) += (du(i, c) - unit(i, c) * proj) / norms[i];
        }
      });
}

}  // namespace csvar
