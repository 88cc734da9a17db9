#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "csvar/patchnet/adjacency.hpp"
#include "csvar/patchnet/config.hpp"
#include "csvar/patchnet/prepared.hpp"
#include "csvar/tensor/autograd.hpp"
#include "csvar/tensor/ops.hpp"

namespace csvar {

struct ForwardOptions {
  bool training = false;              // enables dropout; needs rng
  std::mt19937_64* rng = nullptr;
  bool bypass_sequence_encoder = false;  // test hook: tokens are the raw action embeddings
};

// Graph stage output on a tape.
struct GraphVars {
  ag::Var session_embedding;  // 1 x d_k, final [CLS] state
  ag::Var refined;            // n x d_k
  ag::Var session_logit;      // 1 x 1
  ag::Var patch_logits;       // n x 1
  std::vector<double> cls_attention;  // n, sums to 1
};

struct ForwardVars {
  ag::Var tokens;            // N x d_k
  ag::Var patch_embeddings;  // n x d_k, recurrent aggregator output
  ag::Var adjacency;         // (n + 1) x (n + 1) or invalid when the graph bias is off
  GraphVars graph;
};

struct ForwardOutput {
  std::vector<double> session_embedding;
  double session_logit = 0.0;
  double session_score = 0.0;
  Matrix patch_embeddings;
  Matrix refined_patches;
  std::vector<double> patch_logits;
  std::vector<double> patch_scores;
  std::vector<double> cls_attention;
};

enum class TrainingStage { kWarmup, kDistilled };
std::string_view to_string(TrainingStage stage);
TrainingStage parse_training_stage(std::string_view name);

class PatchNet {
 public:
  // Xavier-uniform weights, zero biases, unit layer-norm gains, relation
  // weights at 1.
  PatchNet(const ModelConfig& cfg, std::uint64_t seed);
  PatchNet(const ModelConfig& cfg, ag::ParameterSet params);

  const ModelConfig& config() const { return cfg_; }
  ag::ParameterSet& params() { return params_; }
  const ag::ParameterSet& params() const { return params_; }

  ag::Var embed_actions(ag::Tape& t, const PreparedSession& s, const ForwardOptions& opt) const;
  ag::Var encode_patches(ag::Tape& t, ag::Var tokens, std::span<const PatchMeta> patches) const;
  // bias may be invalid (plain attention in every graph layer).
  GraphVars graph_forward(ag::Tape& t, ag::Var patch_embeddings, ag::Var bias, const ForwardOptions& opt) const;
  ForwardVars forward(ag::Tape& t, const PreparedSession& s, const ForwardOptions& opt) const;

  ForwardOutput infer(const PreparedSession& s) const;
  // Patch-head probability for a free-standing d_k embedding.
  double score_patch_embedding(std::span<const double> embedding) const;

 private:
  ag::Var param(ag::Tape& t, const std::string& name) const;
  ag::AttentionWeights attention(ag::Tape& t, const std::string& prefix) const;
  ag::Var block(ag::Tape& t, ag::Var x, const std::string& prefix, ag::Var bias, const ForwardOptions& opt,
                std::vector<Matrix>* probs) const;
  ag::Var head(ag::Tape& t, ag::Var x, const std::string& prefix) const;

  ModelConfig cfg_;
  ag::ParameterSet params_;
};

struct Checkpoint {
  ModelConfig config;
  TrainingStage stage = TrainingStage::kWarmup;
  ag::ParameterSet params;
};

// Container: 8-byte magic "CSVARCKP", u32 version, u64 header length, a JSON
// header (config, stage, tensor table), then the tensors as little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const PatchNet& model, TrainingStage stage);
Checkpoint load_checkpoint(const std::filesystem::path& path);
PatchNet model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace csvar
