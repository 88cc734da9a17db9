#include "csvar/pipeline/stages.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "csvar/core/error.hpp"
#include "csvar/core/hash.hpp"
#include "csvar/core/parallel.hpp"
#include "csvar/session/dataset_io.hpp"

namespace csvar::pipeline {
namespace {

using json = nlohmann::json;
using distill::AblationMode;

struct Keyed {
  std::optional<KeyPatchSet> keys;
  double score = 0.0;
};

std::vector<Keyed> select_all(const PipelineConfig& cfg, const PatchNet& model,
                              const std::vector<PreparedSession>& sessions, SelectionPurpose purpose) {
  std::vector<Keyed> out(sessions.size());
  parallel_for(sessions.size(), resolve_threads(cfg.warmup.threads), [&](std::size_t i) {
    const auto fwd = model.infer(sessions[i]);
    out[i].score = fwd.session_score;
    out[i].keys = select_key_patches(fwd, sessions[i].patches, sessions[i].id(), purpose, cfg.selection);
  });
  return out;
}

std::string describe(const PipelineConfig& cfg, const PreparedSession& s, const KeyPatch& k) {
  return llm::describe_patch(s.session, s.patches.at(k.patch), cfg.discretization().slot_width);
}

llm::BridgeConfig bridge(const PipelineConfig& cfg) {
  return {cfg.llm.parallelism, llm::PromptOptions{cfg.discretization().slot_width}};
}

void hash_into(json& list, const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) hash_into(list, f);
  } else if (std::filesystem::exists(p)) {
    list.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}, {"bytes", std::filesystem::file_size(p)}});
  } else {
    list.push_back({{"path", p.string()}, {"sha256", nullptr}});
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<PreparedSession> load_split(const PipelineConfig& cfg, const std::filesystem::path& path) {
  const auto raw = read_sessions(path);
  const HashingEmbedder embedder(cfg.model.d_text);
  std::vector<PreparedSession> out(raw.size());
  parallel_for(raw.size(), resolve_threads(cfg.warmup.threads), [&](std::size_t i) {
    out[i] = prepare_session(preprocess(raw[i], cfg.preprocess), cfg.discretization(), embedder, cfg.model.max_patches);
  });
  return out;
}

DataPaths generate(const PipelineConfig& cfg) {
  const auto paths = cfg.resolved_data();
  const auto ds = synth::generate_dataset(cfg.synth);
  const auto split = synth::split_dataset(ds.sessions, cfg.train_fraction, cfg.val_fraction, cfg.synth.seed);
  write_sessions(paths.train, split.train);
  write_sessions(paths.val, split.val);
  write_sessions(paths.test, split.test);
  synth::write_truth(paths.truth, ds.truth);
  spdlog::info("generated {} sessions ({} train, {} val, {} test)", ds.sessions.size(), split.train.size(),
               split.val.size(), split.test.size());
  return paths;
}

ClientStack::ClientStack(const PipelineConfig& cfg, const synth::PatchTruth* truth) {
  if (cfg.llm.mock) {
    if (truth == nullptr) throw ConfigError("the mock teacher needs the truth sidecar");
    inner_ = std::make_unique<llm::MockLlmClient>(*truth, cfg.seed);
  } else {
    inner_ = std::make_unique<llm::HttpLlmClient>(cfg.llm.http);
  }
  if (cfg.llm.use_cache) cached_ = std::make_unique<llm::CachedLlmClient>(*inner_, cfg.llm_cache());
}

distill::TrainResult run_warmup(const PipelineConfig& cfg, const std::vector<PreparedSession>& train,
                                const std::vector<PreparedSession>& val, const std::filesystem::path& metrics_log) {
  distill::TrainOptions opt;
  opt.metrics_log = metrics_log;
  return distill::warmup_train(PatchNet(cfg.model, cfg.seed), train, val, cfg.warmup, opt);
}

PatchIndex build_index(const PipelineConfig& cfg, const PatchNet& model, const std::vector<PreparedSession>& sessions,
                       llm::LlmClient& client, IndexStats* stats) {
  const auto keyed = select_all(cfg, model, sessions, SelectionPurpose::kIndex);
  std::vector<llm::SummaryRequest> requests;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    if (!keyed[i].keys || keyed[i].keys->size() == 0) continue;
    llm::SummaryRequest req{sessions[i].id(), {}};
    int id = 1;
    for (const auto* k : keyed[i].keys->all())
      req.patches.push_back({id++, describe(cfg, sessions[i], *k), k->user_id, k->slot});
    requests.push_back(std::move(req));
    owner.push_back(i);
  }
  const auto summaries = llm::summarize_all(client, requests, bridge(cfg));
  std::vector<IndexEntry> entries;
  std::size_t fallbacks = 0;
  for (std::size_t r = 0; r < requests.size(); ++r) {
    fallbacks += summaries[r].fallback;
    const auto keys = keyed[owner[r]].keys->all();
    for (std::size_t k = 0; k < keys.size(); ++k)
      entries.push_back({keys[k]->embedding, summaries[r].summaries.at(static_cast<int>(k + 1)),
                         {requests[r].session_id, keys[k]->user_id, keys[k]->role, keys[k]->slot}});
  }
  if (entries.empty()) spdlog::warn("no session reached the index threshold; the index is empty");
  if (stats) *stats = {sessions.size(), requests.size(), entries.size(), fallbacks};
  spdlog::info("index: {} entries from {} of {} sessions", entries.size(), requests.size(), sessions.size());
  return PatchIndex::build(entries, model.config().d_k);
}

distill::TeacherSet reason(const PipelineConfig& cfg, const PatchNet& model,
                           const std::vector<PreparedSession>& sessions, const PatchIndex& index,
                           llm::LlmClient* client, ReasonStats* stats) {
  const bool retrieve = cfg.ablation != AblationMode::kNoRetrieval;
  const bool use_llm = cfg.ablation != AblationMode::kNoLlm;
  if (use_llm && client == nullptr) throw ConfigError("reasoning needs an LLM client");
  const auto keyed = select_all(cfg, model, sessions, SelectionPurpose::kQuery);

  ReasonStats st;
  std::vector<llm::ReasoningRequest> requests;
  std::vector<std::vector<std::string>> neighbors;
  std::vector<std::vector<std::vector<double>>> averaged;  // no_L teacher inputs
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    if (!keyed[i].keys || keyed[i].keys->size() == 0) continue;
    llm::ReasoningRequest req{sessions[i].id(), {}};
    std::vector<std::string> nb;
    std::vector<std::vector<double>> avg;
    int id = 1;
    for (const auto* k : keyed[i].keys->all()) {
      std::string summary, neighbor_session;
      std::vector<double> mixed = k->embedding;
      if (retrieve && !index.empty()) {
        const auto hits = index.retrieve(k->embedding, sessions[i].id(), 1);
        if (!hits.empty()) {
          const auto row = hits.front().entry;
          summary = index.summary(row);
          neighbor_session = index.meta(row).session_id;
          double norm = 0.0;
          for (double v : k->embedding) norm += v * v;
          norm = std::sqrt(norm);
          const auto e = index.embedding(row);
          for (std::size_t d = 0; d < mixed.size(); ++d) mixed[d] = 0.5 * (mixed[d] + norm * e[d]);
          ++st.retrieved;
        }
      }
      req.patches.push_back({id++, describe(cfg, sessions[i], *k), summary, k->user_id, k->slot});
      nb.push_back(neighbor_session);
      avg.push_back(std::move(mixed));
      ++st.queries;
    }
    requests.push_back(std::move(req));
    neighbors.push_back(std::move(nb));
    averaged.push_back(std::move(avg));
  }

  distill::TeacherSet out;
  if (use_llm) {
    const auto judgments = llm::judge_all(*client, requests, bridge(cfg));
    for (std::size_t r = 0; r < requests.size(); ++r) {
      auto rec = distill::teacher_from_judgment(judgments[r], requests[r]);
      rec.neighbor_sessions = neighbors[r];
      st.teacher_missing += rec.teacher_missing;
      out.emplace(rec.session_id, std::move(rec));
    }
  } else {
    for (std::size_t r = 0; r < requests.size(); ++r) {
      distill::TeacherRecord rec;
      rec.session_id = requests[r].session_id;
      rec.neighbor_sessions = neighbors[r];
      double mean = 0.0;
      for (std::size_t k = 0; k < requests[r].patches.size(); ++k) {
        const double score = model.score_patch_embedding(averaged[r][k]);
        rec.patches.push_back({requests[r].patches[k].user_id, requests[r].patches[k].slot, score, 1.0});
        mean += score / static_cast<double>(requests[r].patches.size());
      }
      rec.session_risk = mean;
      out.emplace(rec.session_id, std::move(rec));
    }
  }
  st.sessions = requests.size();
  if (stats) *stats = st;
  spdlog::info("reason: {} sessions, {} queries, {} with a neighbor, {} teacher fallbacks", st.sessions, st.queries,
               st.retrieved, st.teacher_missing);
  return out;
}

distill::TrainResult run_distill(const PipelineConfig& cfg, const PatchNet& warm,
                                 const std::vector<PreparedSession>& train, const std::vector<PreparedSession>& val,
                                 const distill::TeacherSet& teachers, const std::filesystem::path& metrics_log) {
  distill::TrainOptions opt;
  opt.metrics_log = metrics_log;
  return distill::distill_train(warm, train, val, teachers, cfg.distill, cfg.loss, opt);
}

std::vector<SessionPrediction> infer(const PatchNet& model, const std::vector<PreparedSession>& sessions,
                                     std::size_t threads) {
  std::vector<SessionPrediction> out(sessions.size());
  parallel_for(sessions.size(), resolve_threads(threads), [&](std::size_t i) {
    const auto& s = sessions[i];
    const auto fwd = model.infer(s);
    auto& p = out[i];
    p.session_id = s.id();
    p.label = s.label();
    p.session_score = fwd.session_score;
    p.patch_scores = fwd.patch_scores;
    for (const auto& m : s.patches) {
      p.patch_users.push_back(m.user_id);
      p.patch_slots.push_back(m.slot);
    }
  });
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<SessionPrediction>& preds) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : preds) {
    nlohmann::ordered_json patches = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < p.patch_scores.size(); ++k)
      patches.push_back({{"user_id", p.patch_users[k]}, {"slot", p.patch_slots[k]}, {"score", p.patch_scores[k]}});
    nlohmann::ordered_json j{{"session_id", p.session_id}, {"score", p.session_score}};
    if (p.label >= 0) j["label"] = p.label;
    j["patches"] = std::move(patches);
    out << j.dump() << '\n';
  }
}

eval::ScoredSet scored(const std::vector<SessionPrediction>& preds) {
  eval::ScoredSet s;
  for (const auto& p : preds) {
    if (p.label < 0) throw ValidationError("session " + p.session_id + " has no label");
    s.add(p.session_id, p.session_score, p.label);
  }
  return s;
}

Localization localization(const std::vector<SessionPrediction>& preds, const synth::PatchTruth& truth,
                          double threshold) {
  Localization loc;
  for (const auto& p : preds) {
    if (p.label != 1 || p.session_score < threshold || p.patch_scores.empty()) continue;
    ++loc.true_positives;
    const auto best = static_cast<std::size_t>(
        std::max_element(p.patch_scores.begin(), p.patch_scores.end()) - p.patch_scores.begin());
    loc.hits += synth::is_truth_cell(truth, p.session_id, p.patch_users[best], p.patch_slots[best]);
  }
  return loc;
}

std::map<std::string, eval::MetricReport> AblationTable::medians() const {
  std::map<std::string, std::vector<eval::MetricReport>> by_mode;
  for (const auto& r : rows) by_mode[r.mode].push_back(r.test);
  std::map<std::string, eval::MetricReport> out;
  for (const auto& [mode, reports] : by_mode) {
    std::vector<double> a, b, c, d;
    for (const auto& m : reports) {
      a.push_back(m.pr_auc);
      b.push_back(m.f1);
      c.push_back(m.recall_at_fpr);
      d.push_back(m.fpr_at_recall);
    }
    out[mode] = {median(a), median(b), median(c), median(d)};
  }
  return out;
}

void AblationTable::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "mode,seed,pr_auc,f1,recall_at_0.1fpr,fpr_at_0.9recall,localization,seconds\n";
  auto line = [&](const std::string& mode, const std::string& seed, const eval::MetricReport& m,
                  const std::string& loc, double secs) {
    out << mode << ',' << seed << ',' << m.pr_auc << ',' << m.f1 << ',' << m.recall_at_fpr << ',' << m.fpr_at_recall
        << ',' << loc << ',' << secs << '\n';
  };
  for (const auto& r : rows)
    line(r.mode, std::to_string(r.seed), r.test, r.localization ? std::to_string(r.localization->rate()) : "",
         r.seconds);
  for (const auto& [mode, m] : medians()) line(mode, "median", m, "", 0.0);
}

void AblationTable::write_json(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto report = [](const eval::MetricReport& m) {
    return json{{"pr_auc", m.pr_auc},
                {"f1", m.f1},
                {"recall_at_0.1fpr", m.recall_at_fpr},
                {"fpr_at_0.9recall", m.fpr_at_recall}};
  };
  json j{{"rows", json::array()}, {"median", json::object()}};
  for (const auto& r : rows) {
    json row{{"mode", r.mode}, {"seed", r.seed}, {"test", report(r.test)}, {"seconds", r.seconds}};
    if (r.localization)
      row["localization"] = {{"true_positives", r.localization->true_positives},
                             {"hits", r.localization->hits},
                             {"rate", r.localization->rate()}};
    j["rows"].push_back(row);
  }
  for (const auto& [mode, m] : medians()) j["median"][mode] = report(m);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

AblationTable run_ablation(const PipelineConfig& base, const std::vector<AblationMode>& modes,
                           const std::vector<std::uint64_t>& seeds) {
  using clock = std::chrono::steady_clock;
  auto paths = base.resolved_data();
  if (!std::filesystem::exists(paths.train)) paths = generate(base);
  PipelineConfig shared = base;
  shared.propagate();
  const auto train = load_split(shared, paths.train);
  const auto val = load_split(shared, paths.val);
  const auto test = load_split(shared, paths.test);
  const auto truth = synth::read_truth(paths.truth);

  AblationTable table;
  for (const auto seed : seeds) {
    // Warm-up per graph-bias setting, shared by the modes that use it.
    std::map<bool, std::pair<PatchNet, double>> warm;
    std::map<bool, PatchIndex> indexes;
    for (const auto mode : modes) {
      PipelineConfig cfg = base;
      cfg.seed = seed;
      cfg.ablation = mode;
      cfg.propagate();
      cfg.out_dir = base.out_dir / "ablation" / ("seed" + std::to_string(seed));
      const bool graph = cfg.model.use_graph_bias;
      const auto tag = std::string(distill::to_string(mode));
      const auto start = clock::now();

      if (!warm.contains(graph)) {
        const auto t0 = clock::now();
        auto res = run_warmup(cfg, train, val, cfg.out_dir / (graph ? "warmup.jsonl" : "warmup_no_G.jsonl"));
        save_checkpoint(cfg.out_dir / (graph ? "warmup.ckpt" : "warmup_no_G.ckpt"), res.model, TrainingStage::kWarmup);
        warm.emplace(graph, std::make_pair(std::move(res.model),
                                           std::chrono::duration<double>(clock::now() - t0).count()));
      }
      const PatchNet& warm_model = warm.at(graph).first;
      AblationRow row;
      row.mode = tag;
      row.seed = seed;
      std::optional<PatchNet> final_model;
      if (mode != AblationMode::kNoDistill) {
        ClientStack clients(cfg, &truth);
        if (!indexes.contains(graph) && mode != AblationMode::kNoRetrieval)
          indexes.emplace(graph, build_index(cfg, warm_model, train, clients.client()));
        static const PatchIndex kEmpty;
        const PatchIndex& index = indexes.contains(graph) ? indexes.at(graph) : kEmpty;
        const auto teachers = reason(cfg, warm_model, train, index, &clients.client());
        auto res = run_distill(cfg, warm_model, train, val, teachers, cfg.out_dir / (tag + ".jsonl"));
        save_checkpoint(cfg.out_dir / (tag + ".ckpt"), res.model, TrainingStage::kDistilled);
        final_model.emplace(std::move(res.model));
      }
      const PatchNet& model = final_model ? *final_model : warm_model;
      const auto preds = infer(model, test, cfg.warmup.threads);
      row.test = eval::evaluate(scored(preds));
      row.localization = localization(preds, truth);
      row.seconds = std::chrono::duration<double>(clock::now() - start).count() + warm.at(graph).second;
      spdlog::info("ablation seed {} {}: PR-AUC {:.4f} F1 {:.4f} R@0.1FPR {:.4f} FPR@0.9R {:.4f} loc {:.3f}", seed,
                   tag, row.test.pr_auc, row.test.f1, row.test.recall_at_fpr, row.test.fpr_at_recall,
                   row.localization->rate());
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_manifest(const PipelineConfig& cfg, const std::string& command,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs) {
  json j{{"command", command},
         {"created_unix", static_cast<std::int64_t>(std::time(nullptr))},
         {"config_hash", config_hash(cfg)},
         {"config", cfg},
         {"seeds",
          {{"run", cfg.seed}, {"synth", cfg.synth.seed}, {"warmup", cfg.warmup.seed}, {"distill", cfg.distill.seed}}},
         {"inputs", json::array()},
         {"outputs", json::array()}};
  for (const auto& p : inputs) hash_into(j["inputs"], p);
  for (const auto& p : outputs) hash_into(j["outputs"], p);
  const auto dir = cfg.out_dir / "manifests";
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / (command + ".json"));
  if (!out) throw IoError("cannot write manifest for " + command);
  out << j.dump(2) << '\n';
}

}  // namespace csvar::pipeline
