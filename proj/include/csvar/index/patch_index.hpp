#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csvar/session/session.hpp"

namespace csvar {

struct EntryMeta {
  std::string session_id;
  std::string user_id;
  Role role = Role::kViewer;
  std::size_t slot = 0;
};

struct IndexEntry {
  std::vector<double> embedding;  // normalized on build
  std::string summary;
  EntryMeta meta;
};

struct RetrievalResult {
  std::size_t entry = 0;  // row in the index
  double score = 0.0;     // cosine
};

// Exact cosine search over an immutable snapshot. Rows are stored as
// L2-normalized float32; scores accumulate in double. Concurrent readers are
// safe.
class PatchIndex {
 public:
  PatchIndex() = default;

  // Throws ConfigError on dimension mismatch and ValidationError for a zero
  // embedding or an empty session id. `dim` is only needed for an empty list.
  static PatchIndex build(const std::vector<IndexEntry>& entries, std::size_t dim = 0);

  std::size_t size() const { return meta_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return meta_.empty(); }
  std::span<const float> embedding(std::size_t row) const;
  const std::string& summary(std::size_t row) const { return summaries_.at(row); }
  const EntryMeta& meta(std::size_t row) const { return meta_.at(row); }

  // Top-k rows by cosine among entries from other sessions; ties by row order.
  // Throws ConfigError for k == 0 or a query of the wrong dimension.
  std::vector<RetrievalResult> retrieve(std::span<const double> query, const std::string& query_session,
                                        std::size_t k) const;

  // Directory with embeddings.bin (magic "CSVARIDX", u32 version, u64 rows,
  // u64 dim, little-endian f32 rows) and metadata.jsonl, row-aligned.
  void save(const std::filesystem::path& dir) const;
  static PatchIndex load(const std::filesystem::path& dir);

 private:
  std::size_t dim_ = 0;
  std::vector<float> rows_;
  std::vector<std::string> summaries_;
  std::vector<EntryMeta> meta_;
};

// Normalized float32 copy of a query, as the index scores it.
std::vector<float> normalized_f32(std::span<const double> v);

}  // namespace csvar
