#include "csvar/index/patch_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "csvar/core/counters.hpp"
#include "csvar/core/error.hpp"
#include "csvar/simd/kernels.hpp"
#include "json.hpp"

namespace csvar {
namespace {

constexpr char kMagic[8] = {'C', 'S', 'V', 'A', 'R', 'I', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("index: truncated embeddings file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

Role parse_role(const std::string& s) {
  if (s == to_string(Role::kHost)) return Role::kHost;
  if (s == to_string(Role::kViewer)) return Role::kViewer;
  throw ParseError("index metadata: unknown role " + s);
}

}  // namespace

std::vector<float> normalized_f32(std::span<const double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(v.size(), 0.0f);
  if (norm > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

PatchIndex PatchIndex::build(const std::vector<IndexEntry>& entries, std::size_t dim) {
  PatchIndex idx;
  idx.dim_ = entries.empty() ? dim : entries.front().embedding.size();
  if (!entries.empty() && dim != 0 && dim != idx.dim_) throw ConfigError("index: entry dimension differs from requested");
  idx.rows_.reserve(entries.size() * idx.dim_);
  for (const auto& e : entries) {
    if (e.embedding.size() != idx.dim_) throw ConfigError("index: embedding dimension mismatch");
    if (e.meta.session_id.empty()) throw ValidationError("index: entry without session id");
    const auto row = normalized_f32(e.embedding);
    if (std::all_of(row.begin(), row.end(), [](float x) { return x == 0.0f; }))
      throw ValidationError("index: zero embedding cannot be normalized");
    idx.rows_.insert(idx.rows_.end(), row.begin(), row.end());
    idx.summaries_.push_back(e.summary);
    idx.meta_.push_back(e.meta);
  }
  return idx;
}

std::span<const float> PatchIndex::embedding(std::size_t row) const {
  if (row >= size()) throw std::out_of_range("index row");
  return {rows_.data() + row * dim_, dim_};
}

std::vector<RetrievalResult> PatchIndex::retrieve(std::span<const double> query, const std::string& query_session,
                                                  std::size_t k) const {
  if (k == 0) throw ConfigError("retrieve: k must be at least 1");
  ++counters::retrieval_calls();
  if (empty()) return {};
  if (query.size() != dim_) throw ConfigError("retrieve: query dimension mismatch");
  const auto q = normalized_f32(query);
  std::vector<RetrievalResult> hits;
  hits.reserve(size());
  for (std::size_t r = 0; r < size(); ++r) {
    if (meta_[r].session_id == query_session) continue;
    hits.push_back({r, simd::dot_f32(q.data(), rows_.data() + r * dim_, dim_)});
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    [](const RetrievalResult& a, const RetrievalResult& b) {
                      return a.score != b.score ? a.score > b.score : a.entry < b.entry;
                    });
  hits.resize(keep);
  return hits;
}

void PatchIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "embeddings.bin", std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "embeddings.bin").string());
    os.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint64_t>(os, size());
    write_le<std::uint64_t>(os, dim_);
    for (float v : rows_) write_le<float>(os, v);
    if (!os) throw IoError("failed writing index embeddings");
  }
  std::ofstream os(dir / "metadata.jsonl", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "metadata.jsonl").string());
  for (std::size_t r = 0; r < size(); ++r) {
    const auto& m = meta_[r];
    nlohmann::json j{{"summary", summaries_[r]},
                     {"meta",
                      {{"session_id", m.session_id},
                       {"user_id", m.user_id},
                       {"role", std::string(to_string(m.role))},
                       {"slot", m.slot}}}};
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("failed writing index metadata");
}

PatchIndex PatchIndex::load(const std::filesystem::path& dir) {
  PatchIndex idx;
  std::ifstream is(dir / "embeddings.bin", std::ios::binary);
  if (!is) throw IoError("cannot open " + (dir / "embeddings.bin").string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("index: bad magic");
  if (read_le<std::uint32_t>(is) != kVersion) throw ParseError("index: unsupported version");
  const auto rows = read_le<std::uint64_t>(is);
  idx.dim_ = read_le<std::uint64_t>(is);
  if (rows > (1ull << 32) || idx.dim_ > (1ull << 20)) throw ParseError("index: implausible header");
  idx.rows_.resize(rows * idx.dim_);
  for (float& v : idx.rows_) v = read_le<float>(is);

  std::ifstream ms(dir / "metadata.jsonl");
  if (!ms) throw IoError("cannot open " + (dir / "metadata.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ms, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& m = j.at("meta");
      idx.summaries_.push_back(j.at("summary").get<std::string>());
      idx.meta_.push_back(EntryMeta{m.at("session_id").get<std::string>(), m.at("user_id").get<std::string>(),
                                    parse_role(m.at("role").get<std::string>()), m.at("slot").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("index metadata line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (idx.meta_.size() != rows) throw ParseError("index: metadata rows do not match embeddings");
  return idx;
}

}  // namespace csvar
