#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csvar/distill/losses.hpp"
#include "csvar/distill/teacher.hpp"
#include "csvar/eval/metrics.hpp"
#include "csvar/patchnet/model.hpp"
#include "json.hpp"

namespace csvar::distill {

enum class AblationMode { kFull, kNoGraph, kNoRetrieval, kNoLlm, kNoDistill };
std::string_view to_string(AblationMode mode);  // full, no_G, no_R, no_L, no_D
AblationMode parse_ablation_mode(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency; results do not depend on it
  AblationMode ablation = AblationMode::kFull;

  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW(const ag::ParameterSet& params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(ag::ParameterSet& params, const ag::GradBuffer& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct EpochRecord {
  std::string stage;  // warmup or distill
  std::size_t epoch = 0;  // 1-based
  LossParts train_loss;   // per-session means
  double train_total = 0.0;
  double val_loss = 0.0;  // per-session mean session loss
  eval::MetricReport val;
  double selection_metric = 0.0;
  bool improved = false;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainOptions {
  std::filesystem::path metrics_log;  // JSON lines appended per epoch; empty: none
  // Replaces validation PR-AUC as the selection metric (tests).
  std::function<double(const PatchNet&, std::size_t epoch)> selection_override;
};

struct TrainResult {
  PatchNet model;  // best checkpoint by validation selection metric
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
};

// Session scores for a dataset, in input order.
eval::ScoredSet score_sessions(const PatchNet& model, const std::vector<PreparedSession>& sessions,
                               std::size_t threads = 0);

// Minimizes the session loss; keeps the best epoch by validation PR-AUC and
// stops after `patience` epochs without strict improvement.
TrainResult warmup_train(PatchNet model, const std::vector<PreparedSession>& train,
                         const std::vector<PreparedSession>& val, const TrainConfig& cfg,
                         const TrainOptions& opt = {});

// Same loop with L_s + beta L_p + gamma L_p2s. Sessions without a usable
// teacher record contribute L_s only. Optimizer state starts fresh.
TrainResult distill_train(PatchNet warm, const std::vector<PreparedSession>& train,
                          const std::vector<PreparedSession>& val, const TeacherSet& teachers,
                          const TrainConfig& cfg, const LossWeights& w, const TrainOptions& opt = {});

// Loss of one session on a recording tape; the hook for gradient checks.
struct TeacherTarget {
  std::vector<std::size_t> patch_rows;
  std::vector<double> risk;
  std::vector<double> saliency;
  double session_risk = 0.0;
};

// Maps a record's (user, slot) keys onto patch rows. ValidationError if a
// teacher patch is absent from the session. nullopt when the record is not
// usable (missing teacher or zero saliency, the latter logged).
std::optional<TeacherTarget> resolve_teacher(const PreparedSession& s, const TeacherRecord& record);

struct SessionLoss {
  ag::Var total;
  LossParts parts;
};

SessionLoss session_objective(ag::Tape& t, const PatchNet& model, const PreparedSession& s,
                              const TeacherTarget* teacher, const LossWeights& w, const ForwardOptions& fopt);

}  // namespace csvar::distill
