#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "csvar/distill/train.hpp"
#include "csvar/eval/metrics.hpp"
#include "csvar/index/patch_index.hpp"
#include "csvar/pipeline/config.hpp"

namespace csvar::pipeline {

// Preprocessed, embedded sessions of one split.
std::vector<PreparedSession> load_split(const PipelineConfig& cfg, const std::filesystem::path& path);

// Writes train/val/test JSONL plus the truth sidecar. Returns the paths.
DataPaths generate(const PipelineConfig& cfg);

// Owns the configured client: the mock oracle (needs the truth file) or the
// HTTP client, optionally behind the transcript cache.
class ClientStack {
 public:
  ClientStack(const PipelineConfig& cfg, const synth::PatchTruth* truth);
  llm::LlmClient& client() { return cached_ ? *cached_ : *inner_; }
  std::size_t cache_hits() const { return cached_ ? cached_->hits() : 0; }

 private:
  std::unique_ptr<llm::LlmClient> inner_;
  std::unique_ptr<llm::CachedLlmClient> cached_;
};

distill::TrainResult run_warmup(const PipelineConfig& cfg, const std::vector<PreparedSession>& train,
                                const std::vector<PreparedSession>& val,
                                const std::filesystem::path& metrics_log = {});

struct IndexStats {
  std::size_t sessions_scored = 0;
  std::size_t sessions_indexed = 0;  // predicted positive
  std::size_t entries = 0;
  std::size_t summary_fallbacks = 0;
};

// Key patches (index purpose) of the sessions the model flags, summarized in
// their session context and stored with their refined embeddings.
PatchIndex build_index(const PipelineConfig& cfg, const PatchNet& model, const std::vector<PreparedSession>& sessions,
                       llm::LlmClient& client, IndexStats* stats = nullptr);

struct ReasonStats {
  std::size_t sessions = 0;
  std::size_t queries = 0;
  std::size_t retrieved = 0;
  std::size_t teacher_missing = 0;
};

// Teacher records for every session: query key patches, top-1 cross-session
// neighbor, reasoning prompt, parsed judgment. Under no_R nothing is
// retrieved; under no_L the teacher is the patch-head score of each query
// embedding averaged with its neighbor, with uniform saliency.
distill::TeacherSet reason(const PipelineConfig& cfg, const PatchNet& model,
                           const std::vector<PreparedSession>& sessions, const PatchIndex& index,
                           llm::LlmClient* client, ReasonStats* stats = nullptr);

distill::TrainResult run_distill(const PipelineConfig& cfg, const PatchNet& warm,
                                 const std::vector<PreparedSession>& train, const std::vector<PreparedSession>& val,
                                 const distill::TeacherSet& teachers, const std::filesystem::path& metrics_log = {});

struct SessionPrediction {
  std::string session_id;
  int label = -1;
  double session_score = 0.0;
  std::vector<std::string> patch_users;
  std::vector<std::size_t> patch_slots;
  std::vector<double> patch_scores;
};

// PatchNet only: no index, no client.
std::vector<SessionPrediction> infer(const PatchNet& model, const std::vector<PreparedSession>& sessions,
                                     std::size_t threads = 0);
void write_predictions(const std::filesystem::path& path, const std::vector<SessionPrediction>& preds);

eval::ScoredSet scored(const std::vector<SessionPrediction>& preds);

// Share of true-positive sessions (label 1, score >= threshold) whose
// highest-scoring patch is a planted cell. nullopt without true positives.
struct Localization {
  std::size_t true_positives = 0;
  std::size_t hits = 0;
  double rate() const { return true_positives ? static_cast<double>(hits) / true_positives : 0.0; }
};
Localization localization(const std::vector<SessionPrediction>& preds, const synth::PatchTruth& truth,
                          double threshold = 0.5);

struct AblationRow {
  std::string mode;
  std::uint64_t seed = 0;
  eval::MetricReport test;
  double seconds = 0.0;
  std::optional<Localization> localization;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  // Per mode: median of each metric over seeds.
  std::map<std::string, eval::MetricReport> medians() const;
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

// Trains every requested mode for every seed on one dataset. Modes sharing a
// warm-up configuration reuse it (no_D is the warm-up checkpoint). Artifacts
// go to <out_dir>/ablation/seed<seed>/ as <mode>.ckpt and <mode>.jsonl.
AblationTable run_ablation(const PipelineConfig& base, const std::vector<distill::AblationMode>& modes,
                           const std::vector<std::uint64_t>& seeds);

// Artifact provenance: config hash, seeds, and SHA-256 of every artifact.
void write_manifest(const PipelineConfig& cfg, const std::string& command,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace csvar::pipeline
