#include "csvar/distill/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "csvar/core/error.hpp"
#include "csvar/core/parallel.hpp"

namespace csvar::distill {
namespace {

constexpr std::string_view kModeNames[] = {"full", "no_G", "no_R", "no_L", "no_D"};

struct StepOutput {
  LossParts parts;
  double total = 0.0;
};

class Loop {
 public:
  Loop(PatchNet model, const std::vector<PreparedSession>& train, const std::vector<PreparedSession>& val,
       const TrainConfig& cfg, const TrainOptions& opt, std::string stage)
      : model_(std::move(model)), train_(train), val_(val), cfg_(cfg), opt_(opt), stage_(std::move(stage)) {
    cfg_.validate();
    if (train_.empty()) throw ConfigError(stage_ + ": empty training data");
    if (val_.empty() && !opt_.selection_override) throw ConfigError(stage_ + ": empty validation data");
    threads_ = resolve_threads(cfg_.threads);
  }

  TrainResult run(const std::vector<std::optional<TeacherTarget>>& teachers, const LossWeights& w) {
    AdamW opt(model_.params(), cfg_.learning_rate, cfg_.weight_decay);
    std::vector<ag::GradBuffer> buffers;
    const std::size_t batch = std::min(cfg_.batch_size, train_.size());
    buffers.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) buffers.emplace_back(model_.params());
    ag::GradBuffer total(model_.params());

    std::optional<TrainResult> best;
    std::size_t stale = 0;
    std::vector<EpochRecord> history;
    std::vector<std::size_t> order(train_.size());
    std::vector<StepOutput> outs(batch);
    const bool training_noise = model_.config().dropout > 0.0;

    for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 shuffle_rng(seed_for(epoch, 0, 0));
      std::shuffle(order.begin(), order.end(), shuffle_rng);

      EpochRecord rec;
      rec.stage = stage_;
      rec.epoch = epoch;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t count = std::min(batch, order.size() - start);
        parallel_for(count, threads_, [&](std::size_t b) {
          const std::size_t idx = order[start + b];
          auto& grads = buffers[b];
          grads.zero();
          std::mt19937_64 rng(seed_for(epoch, idx, 1));
          ForwardOptions fopt{training_noise, &rng, false};
          ag::Tape tape(&grads);
          const TeacherTarget* target = !teachers.empty() && teachers[idx] ? &*teachers[idx] : nullptr;
          auto loss = session_objective(tape, model_, train_[idx], target, w, fopt);
          outs[b] = {loss.parts, tape.value(loss.total)(0, 0)};
          tape.backward(loss.total);
        });
        total.zero();
        for (std::size_t b = 0; b < count; ++b) {
          total.add(buffers[b]);
          rec.train_loss.session += outs[b].parts.session;
          rec.train_loss.patch += outs[b].parts.patch;
          rec.train_loss.patch_to_session += outs[b].parts.patch_to_session;
          rec.train_total += outs[b].total;
        }
        total.scale(1.0 / static_cast<double>(count));
        opt.step(model_.params(), total);
      }
      const double n = static_cast<double>(train_.size());
      rec.train_loss.session /= n;
      rec.train_loss.patch /= n;
      rec.train_loss.patch_to_session /= n;
      rec.train_total /= n;

      if (!val_.empty()) {
        const auto scored = score_sessions(model_, val_, threads_);
        std::vector<double> logits;
        for (double p : scored.scores) logits.push_back(std::log(p) - std::log1p(-p));
        rec.val_loss = session_loss(logits, scored.labels) / static_cast<double>(val_.size());
        rec.val = eval::evaluate(scored);
        rec.selection_metric = rec.val.pr_auc;
      }
      if (opt_.selection_override) rec.selection_metric = opt_.selection_override(model_, epoch);

      rec.improved = !best || rec.selection_metric > best->best_metric;
      if (rec.improved) {
        best.emplace(TrainResult{model_, epoch, rec.selection_metric, 0, {}});
        stale = 0;
      } else {
        ++stale;
      }
      log(rec);
      history.push_back(rec);
      if (stale >= cfg_.patience) {
        spdlog::info("{}: early stop after epoch {} (best epoch {})", stage_, epoch, best->best_epoch);
        break;
      }
    }
    best->epochs_run = history.size();
    best->history = std::move(history);
    return std::move(*best);
  }

 private:
  std::uint64_t seed_for(std::size_t epoch, std::size_t idx, std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(idx),
                      static_cast<std::uint32_t>(stream)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  }

  void log(const EpochRecord& rec) const {
    spdlog::info("{} epoch {}: train {:.4f} (L_s {:.4f}, L_p {:.4f}, L_p2s {:.4f}) val PR-AUC {:.4f}{}", stage_,
                 rec.epoch, rec.train_total, rec.train_loss.session, rec.train_loss.patch,
                 rec.train_loss.patch_to_session, rec.val.pr_auc, rec.improved ? " *" : "");
    if (opt_.metrics_log.empty()) return;
    if (opt_.metrics_log.has_parent_path()) std::filesystem::create_directories(opt_.metrics_log.parent_path());
    std::ofstream out(opt_.metrics_log, std::ios::app);
    if (!out) throw IoError("cannot append to " + opt_.metrics_log.string());
    out << to_json(rec).dump() << '\n';
  }

  PatchNet model_;
  const std::vector<PreparedSession>& train_;
  const std::vector<PreparedSession>& val_;
  TrainConfig cfg_;
  TrainOptions opt_;
  std::string stage_;
  std::size_t threads_ = 1;
};

void need_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

std::string_view to_string(AblationMode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

AblationMode parse_ablation_mode(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kModeNames); ++i)
    if (kModeNames[i] == name) return static_cast<AblationMode>(i);
  throw ConfigError("unknown ablation mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  need_positive(learning_rate, "learning rate");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs == 0) throw ConfigError("max epochs must be positive");
  if (patience == 0 || patience > max_epochs) throw ConfigError("patience must be in [1, max_epochs]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
                     {"patience", c.patience},           {"seed", c.seed},
                     {"threads", c.threads},             {"ablation", std::string(to_string(c.ablation))}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  for (const auto& [k, v] : j.items()) {
    if (k == "learning_rate") d.learning_rate = v.get<double>();
    else if (k == "weight_decay") d.weight_decay = v.get<double>();
    else if (k == "batch_size") d.batch_size = v.get<std::size_t>();
    else if (k == "max_epochs") d.max_epochs = v.get<std::size_t>();
    else if (k == "patience") d.patience = v.get<std::size_t>();
    else if (k == "seed") d.seed = v.get<std::uint64_t>();
    else if (k == "threads") d.threads = v.get<std::size_t>();
    else if (k == "ablation") d.ablation = parse_ablation_mode(v.get<std::string>());
    else throw ConfigError("unknown train config key '" + k + "'");
  }
  d.validate();
  c = d;
}

void to_json(nlohmann::json& j, const LossWeights& w) { j = nlohmann::json{{"beta", w.beta}, {"gamma", w.gamma}}; }

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  for (const auto& [k, v] : j.items()) {
    if (k == "beta") d.beta = v.get<double>();
    else if (k == "gamma") d.gamma = v.get<double>();
    else throw ConfigError("unknown loss weight key '" + k + "'");
  }
  d.validate();
  w = d;
}

AdamW::AdamW(const ag::ParameterSet& params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].value.rows(), params[i].value.cols());
    v_.emplace_back(params[i].value.rows(), params[i].value.cols());
  }
}

void AdamW::step(ag::ParameterSet& params, const ag::GradBuffer& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p].value.storage();
    const auto& g = grads[p].storage();
    auto& m = m_[p].storage();
    auto& v = v_[p].storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      w[i] -= lr_ * ((m[i] / c1) / (std::sqrt(v[i] / c2) + eps_) + wd_ * w[i]);
    }
  }
}

nlohmann::json to_json(const EpochRecord& r) {
  return nlohmann::json{{"stage", r.stage},
                        {"epoch", r.epoch},
                        {"split", "train"},
                        {"loss_session", r.train_loss.session},
                        {"loss_patch", r.train_loss.patch},
                        {"loss_patch_to_session", r.train_loss.patch_to_session},
                        {"loss_total", r.train_total},
                        {"val",
                         {{"loss_session", r.val_loss},
                          {"pr_auc", r.val.pr_auc},
                          {"f1", r.val.f1},
                          {"recall_at_0.1fpr", r.val.recall_at_fpr},
                          {"fpr_at_0.9recall", r.val.fpr_at_recall}}},
                        {"selection_metric", r.selection_metric},
                        {"improved", r.improved}};
}

eval::ScoredSet score_sessions(const PatchNet& model, const std::vector<PreparedSession>& sessions,
                               std::size_t threads) {
  eval::ScoredSet out;
  out.session_ids.resize(sessions.size());
  out.scores.resize(sessions.size());
  out.labels.resize(sessions.size());
  parallel_for(sessions.size(), resolve_threads(threads), [&](std::size_t i) {
    const auto& s = sessions[i];
    if (s.label() < 0) throw ValidationError("session " + s.id() + " has no label");
    out.session_ids[i] = s.id();
    // Clamp away from {0, 1} so the log-loss stays finite on saturated logits.
    out.scores[i] = std::clamp(model.infer(s).session_score, 1e-12, 1.0 - 1e-12);
    out.labels[i] = s.label();
  });
  return out;
}

std::optional<TeacherTarget> resolve_teacher(const PreparedSession& s, const TeacherRecord& record) {
  if (record.teacher_missing || record.patches.empty()) return std::nullopt;
  if (!record.usable()) {
    spdlog::warn("teacher for {} has all-zero saliency; treating it as missing", s.id());
    return std::nullopt;
  }
  TeacherTarget t;
  t.session_risk = record.session_risk;
  for (const auto& p : record.patches) {
    std::size_t row = s.patches.size();
    for (std::size_t k = 0; k < s.patches.size(); ++k)
      if (s.patches[k].user_id == p.user_id && s.patches[k].slot == p.slot) row = k;
    if (row == s.patches.size())
      throw ValidationError("teacher patch (" + p.user_id + ", " + std::to_string(p.slot) + ") not in session " +
                            s.id());
    t.patch_rows.push_back(row);
    t.risk.push_back(p.risk);
    t.saliency.push_back(p.saliency);
  }
  return t;
}

SessionLoss session_objective(ag::Tape& t, const PatchNet& model, const PreparedSession& s,
                              const TeacherTarget* teacher, const LossWeights& w, const ForwardOptions& fopt) {
  const auto fv = model.forward(t, s, fopt);
  SessionLoss out;
  out.total = ag::bce_with_logits_sum(t, fv.graph.session_logit, {static_cast<double>(s.label())});
  out.parts.session = t.value(out.total)(0, 0);
  if (teacher == nullptr || (w.beta == 0.0 && w.gamma == 0.0)) return out;
  const ag::Var probs = ag::sigmoid(t, ag::gather_rows(t, fv.graph.patch_logits, teacher->patch_rows));
  if (w.beta != 0.0) {
    const ag::Var lp = patch_loss(t, probs, teacher->risk);
    out.parts.patch = t.value(lp)(0, 0);
    out.total = ag::add(t, out.total, ag::scale(t, lp, w.beta));
  }
  if (w.gamma != 0.0) {
    const ag::Var lps = patch_to_session_loss(t, probs, teacher->saliency, teacher->session_risk);
    out.parts.patch_to_session = t.value(lps)(0, 0);
    out.total = ag::add(t, out.total, ag::scale(t, lps, w.gamma));
  }
  return out;
}

TrainResult warmup_train(PatchNet model, const std::vector<PreparedSession>& train,
                         const std::vector<PreparedSession>& val, const TrainConfig& cfg, const TrainOptions& opt) {
  Loop loop(std::move(model), train, val, cfg, opt, "warmup");
  return loop.run({}, {});
}

TrainResult distill_train(PatchNet warm, const std::vector<PreparedSession>& train,
                          const std::vector<PreparedSession>& val, const TeacherSet& teachers,
                          const TrainConfig& cfg, const LossWeights& w, const TrainOptions& opt) {
  w.validate();
  std::vector<std::optional<TeacherTarget>> targets(train.size());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto it = teachers.find(train[i].id());
    if (it == teachers.end()) continue;
    targets[i] = resolve_teacher(train[i], it->second);
    covered += targets[i].has_value();
  }
  spdlog::info("distill: {} of {} training sessions have usable teacher records", covered, train.size());
  Loop loop(std::move(warm), train, val, cfg, opt, "distill");
  return loop.run(targets, w);
}

}  // namespace csvar::distill
