#include "cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "csvar/core/counters.hpp"
#include "csvar/core/error.hpp"
#include "csvar/eval/heatmap.hpp"
#include "csvar/pipeline/stages.hpp"

namespace csvar::cli {
namespace {

namespace fs = std::filesystem;
using pipeline::PipelineConfig;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool mock_llm = false;
  bool quiet = false;
};

PipelineConfig resolve(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : pipeline::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.mock_llm) cfg.llm.mock = true;
  cfg.propagate();
  cfg.validate();
  return cfg;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string() + " (run the earlier stage first)");
}

void print_report(const std::string& title, const eval::MetricReport& m) {
  std::cout << title << ": PR-AUC " << m.pr_auc << "  F1 " << m.f1 << "  R@0.1FPR " << m.recall_at_fpr
            << "  FPR@0.9R " << m.fpr_at_recall << "\n";
}

nlohmann::json report_json(const eval::MetricReport& m) {
  return {{"pr_auc", m.pr_auc}, {"f1", m.f1}, {"recall_at_0.1fpr", m.recall_at_fpr}, {"fpr_at_0.9recall", m.fpr_at_recall}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::optional<synth::PatchTruth> truth_if_needed(const PipelineConfig& cfg) {
  if (!cfg.llm.mock) return std::nullopt;
  const auto p = cfg.resolved_data().truth;
  require_file(p, "truth sidecar");
  return synth::read_truth(p);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Cross-session evidence risk assessment for live-stream sessions"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)");
  app.add_option("--seed", g.seed, "overrides the config seed");
  app.add_option("--out", g.out, "overrides the output directory");
  app.add_flag("--mock-llm", g.mock_llm, "use the mock teacher instead of an HTTP endpoint");
  app.add_flag("--quiet", g.quiet, "only log warnings");

  std::string checkpoint, index_dir, teachers, sessions, heatmaps, session_id, split = "test";
  std::string modes = "full,no_G,no_R,no_L,no_D", seeds;

  auto* gen = app.add_subcommand("generate", "write the synthetic train/val/test sets and truth sidecar");
  auto* warm = app.add_subcommand("warmup", "stage 1: train PatchNet on session labels");
  auto* idx = app.add_subcommand("index", "stage 2: build the key-patch evidence index");
  idx->add_option("--checkpoint", checkpoint, "warm-up checkpoint (default <out>/warmup.ckpt)");
  auto* rsn = app.add_subcommand("reason", "stage 3: retrieval-augmented teacher judgments");
  rsn->add_option("--checkpoint", checkpoint, "warm-up checkpoint (default <out>/warmup.ckpt)");
  rsn->add_option("--index", index_dir, "index directory (default <out>/index)");
  auto* dst = app.add_subcommand("distill", "stage 4: cross-granularity distillation");
  dst->add_option("--checkpoint", checkpoint, "warm-up checkpoint (default <out>/warmup.ckpt)");
  dst->add_option("--teachers", teachers, "teacher records (default <out>/teachers.jsonl)");
  auto* inf = app.add_subcommand("infer", "score sessions with PatchNet alone");
  inf->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/distilled.ckpt)");
  inf->add_option("--sessions", sessions, "sessions JSONL (default: the test split)");
  inf->add_option("--heatmaps", heatmaps, "write a heatmap per session into this directory");
  auto* evl = app.add_subcommand("eval", "metrics of a checkpoint on a split");
  evl->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/distilled.ckpt)");
  evl->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  auto* abl = app.add_subcommand("ablation", "train each ablation mode per seed and tabulate test metrics");
  abl->add_option("--modes", modes, "comma-separated subset of full,no_G,no_R,no_L,no_D");
  abl->add_option("--seeds", seeds, "comma-separated training seeds (default: the config seed)");
  auto* hm = app.add_subcommand("heatmap", "user x timeslot risk grid for one session");
  hm->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/distilled.ckpt)");
  hm->add_option("--sessions", sessions, "sessions JSONL (default: the test split)");
  hm->add_option("--session-id", session_id, "session to render")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(g.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const PipelineConfig cfg = resolve(g);
    const auto data = cfg.resolved_data();
    fs::create_directories(cfg.out_dir);
    const auto warm_ckpt = or_default(checkpoint, cfg.out_dir / "warmup.ckpt");
    const auto final_ckpt = or_default(checkpoint, cfg.out_dir / "distilled.ckpt");

    if (gen->parsed()) {
      const auto paths = pipeline::generate(cfg);
      pipeline::write_manifest(cfg, "generate", {}, {paths.train, paths.val, paths.test, paths.truth});
      std::cout << "wrote " << paths.train.parent_path().string() << "\n";
    } else if (warm->parsed()) {
      require_file(data.train, "training split");
      const auto train = pipeline::load_split(cfg, data.train);
      const auto val = pipeline::load_split(cfg, data.val);
      const auto log = cfg.out_dir / "metrics" / "warmup.jsonl";
      fs::remove(log);
      const auto res = pipeline::run_warmup(cfg, train, val, log);
      save_checkpoint(warm_ckpt, res.model, TrainingStage::kWarmup);
      pipeline::write_manifest(cfg, "warmup", {data.train, data.val}, {warm_ckpt, log});
      std::cout << "best epoch " << res.best_epoch << " of " << res.epochs_run << ", validation PR-AUC "
                << res.best_metric << "\nwrote " << warm_ckpt.string() << "\n";
    } else if (idx->parsed()) {
      require_file(warm_ckpt, "warm-up checkpoint");
      const auto model = model_from_checkpoint(load_checkpoint(warm_ckpt));
      const auto train = pipeline::load_split(cfg, data.train);
      const auto truth = truth_if_needed(cfg);
      pipeline::ClientStack clients(cfg, truth ? &*truth : nullptr);
      pipeline::IndexStats stats;
      const auto index = pipeline::build_index(cfg, model, train, clients.client(), &stats);
      const auto dir = or_default(index_dir, cfg.out_dir / "index");
      index.save(dir);
      pipeline::write_manifest(cfg, "index", {warm_ckpt, data.train}, {dir});
      std::cout << "indexed " << stats.entries << " key patches from " << stats.sessions_indexed << " sessions ("
                << stats.summary_fallbacks << " summary fallbacks)\nwrote " << dir.string() << "\n";
    } else if (rsn->parsed()) {
      require_file(warm_ckpt, "warm-up checkpoint");
      const auto dir = or_default(index_dir, cfg.out_dir / "index");
      const auto model = model_from_checkpoint(load_checkpoint(warm_ckpt));
      const auto train = pipeline::load_split(cfg, data.train);
      const auto index = cfg.ablation == distill::AblationMode::kNoRetrieval ? PatchIndex{} : PatchIndex::load(dir);
      const auto truth = truth_if_needed(cfg);
      pipeline::ClientStack clients(cfg, truth ? &*truth : nullptr);
      counters::reset();
      pipeline::ReasonStats stats;
      const auto set = pipeline::reason(cfg, model, train, index, &clients.client(), &stats);
      const auto out = cfg.out_dir / "teachers.jsonl";
      distill::write_teachers(out, set);
      pipeline::write_manifest(cfg, "reason", {warm_ckpt, data.train, dir}, {out});
      std::cout << "teacher records: " << set.size() << " (" << stats.teacher_missing << " fallbacks), client calls "
                << counters::llm_calls().load() << ", cache hits " << clients.cache_hits() << "\nwrote "
                << out.string() << "\n";
    } else if (dst->parsed()) {
      require_file(warm_ckpt, "warm-up checkpoint");
      const auto tpath = or_default(teachers, cfg.out_dir / "teachers.jsonl");
      require_file(tpath, "teacher records");
      const auto warm_model = model_from_checkpoint(load_checkpoint(warm_ckpt));
      const auto train = pipeline::load_split(cfg, data.train);
      const auto val = pipeline::load_split(cfg, data.val);
      const auto log = cfg.out_dir / "metrics" / "distill.jsonl";
      fs::remove(log);
      const auto res = pipeline::run_distill(cfg, warm_model, train, val, distill::read_teachers(tpath), log);
      const auto out = cfg.out_dir / "distilled.ckpt";
      save_checkpoint(out, res.model, TrainingStage::kDistilled);
      pipeline::write_manifest(cfg, "distill", {warm_ckpt, tpath, data.train, data.val}, {out, log});
      std::cout << "best epoch " << res.best_epoch << " of " << res.epochs_run << ", validation PR-AUC "
                << res.best_metric << "\nwrote " << out.string() << "\n";
    } else if (inf->parsed()) {
      require_file(final_ckpt, "checkpoint");
      counters::reset();
      const auto model = model_from_checkpoint(load_checkpoint(final_ckpt));
      const auto spath = or_default(sessions, data.test);
      const auto batch = pipeline::load_split(cfg, spath);
      const auto preds = pipeline::infer(model, batch, cfg.warmup.threads);
      const auto out = cfg.out_dir / "predictions.jsonl";
      pipeline::write_predictions(out, preds);
      std::vector<fs::path> outputs{out};
      if (!heatmaps.empty()) {
        for (std::size_t i = 0; i < batch.size(); ++i)
          eval::emit_heatmap(eval::make_heatmap(batch[i], preds[i].patch_scores, cfg.discretization().slot_count()),
                             fs::path(heatmaps) / batch[i].id());
        outputs.push_back(heatmaps);
      }
      const auto retrievals = counters::retrieval_calls().load();
      const auto llm_calls = counters::llm_calls().load();
      std::cout << "scored " << preds.size() << " sessions; retrieval calls " << retrievals << ", LLM calls "
                << llm_calls << "\nwrote " << out.string() << "\n";
      if (retrievals != 0 || llm_calls != 0) {
        std::cerr << "error: inference touched the index or the LLM client\n";
        return 3;
      }
      pipeline::write_manifest(cfg, "infer", {final_ckpt, spath}, outputs);
    } else if (evl->parsed()) {
      require_file(final_ckpt, "checkpoint");
      const auto model = model_from_checkpoint(load_checkpoint(final_ckpt));
      const auto path = split == "train" ? data.train : split == "val" ? data.val : data.test;
      const auto preds = pipeline::infer(model, pipeline::load_split(cfg, path), cfg.warmup.threads);
      const auto report = eval::evaluate(pipeline::scored(preds));
      print_report(split, report);
      nlohmann::json j{{"checkpoint", final_ckpt.string()}, {"split", split}, {"metrics", report_json(report)}};
      if (cfg.llm.mock && fs::exists(data.truth)) {
        const auto loc = pipeline::localization(preds, synth::read_truth(data.truth));
        j["localization"] = {{"true_positives", loc.true_positives}, {"hits", loc.hits}, {"rate", loc.rate()}};
        std::cout << "localization: " << loc.hits << "/" << loc.true_positives << "\n";
      }
      const auto out = cfg.out_dir / ("eval_" + split + ".json");
      std::ofstream(out) << j.dump(2) << '\n';
      pipeline::write_manifest(cfg, "eval", {final_ckpt, path}, {out});
    } else if (abl->parsed()) {
      std::vector<distill::AblationMode> mode_list;
      for (const auto& m : split_list(modes)) mode_list.push_back(distill::parse_ablation_mode(m));
      std::vector<std::uint64_t> seed_list;
      for (const auto& s : split_list(seeds)) seed_list.push_back(std::stoull(s));
      if (seed_list.empty()) seed_list.push_back(cfg.seed);
      if (!cfg.llm.mock) throw ConfigError("ablation needs the mock teacher (--mock-llm)");
      const auto table = pipeline::run_ablation(cfg, mode_list, seed_list);
      const auto csv = cfg.out_dir / "ablation.csv", js = cfg.out_dir / "ablation.json";
      table.write_csv(csv);
      table.write_json(js);
      for (const auto& [mode, m] : table.medians()) print_report("median " + mode, m);
      pipeline::write_manifest(cfg, "ablation", {}, {csv, js});
    } else if (hm->parsed()) {
      require_file(final_ckpt, "checkpoint");
      const auto model = model_from_checkpoint(load_checkpoint(final_ckpt));
      const auto batch = pipeline::load_split(cfg, or_default(sessions, data.test));
      const auto it = std::find_if(batch.begin(), batch.end(), [&](const auto& s) { return s.id() == session_id; });
      if (it == batch.end()) throw ValidationError("session " + session_id + " not found");
      const auto out = model.infer(*it);
      const auto base = cfg.out_dir / "heatmaps" / session_id;
      eval::emit_heatmap(eval::make_heatmap(*it, out.patch_scores, cfg.discretization().slot_count()), base);
      std::cout << "session score " << out.session_score << "\nwrote " << base.string() << ".svg\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace csvar::cli
