// Acceptance harness: one PASS/FAIL line per criterion, exit code 0 only if
// every selected criterion passes within its time limit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "cli.hpp"
#include "csvar/core/counters.hpp"
#include "csvar/core/error.hpp"
#include "csvar/distill/losses.hpp"
#include "csvar/distill/train.hpp"
#include "csvar/eval/metrics.hpp"
#include "csvar/index/key_patches.hpp"
#include "csvar/index/patch_index.hpp"
#include "csvar/llm/mock_oracle.hpp"
#include "csvar/llm/protocol.hpp"
#include "csvar/patchnet/adjacency.hpp"
#include "csvar/patchnet/model.hpp"
#include "csvar/pipeline/config.hpp"
#include "csvar/pipeline/stages.hpp"
#include "unit/llm_fixtures.hpp"
#include "unit/reference_model.hpp"
#include "unit/session_fixtures.hpp"
#include "unit/test_util.hpp"

namespace fs = std::filesystem;
using namespace csvar;
using csvar::reference::Mat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string strf(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<PatchMeta> random_patches(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> user(0, 4), slot(1, 18);
  std::vector<PatchMeta> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int u = user(rng);
    PatchMeta m;
    m.user_id = u == 0 ? "host" : "v" + std::to_string(u);
    m.role = u == 0 ? Role::kHost : Role::kViewer;
    m.slot = static_cast<std::size_t>(slot(rng));
    out.push_back(m);
  }
  return out;
}

// 1 -------------------------------------------------------------------------

Outcome adjacency_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> nd(1, 12), dd(1, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = nd(rng), d = dd(rng);
    const auto patches = random_patches(n, rng);
    Matrix e = testing::random_matrix(n, d, rng);
    if (trial % 10 == 0 && n > 1)  // duplicated rows hit sim = 1 exactly
      for (std::size_t c = 0; c < d; ++c) e(1, c) = e(0, c);
    const auto rel = build_relation_adjacency(e, patches);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0, ni = 0.0, nj = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dot += e(i, c) * e(j, c);
          ni += e(i, c) * e(i, c);
          nj += e(j, c) * e(j, c);
        }
        const double sim = 0.5 * (1.0 + dot / std::sqrt(ni * nj));
        const long gap = static_cast<long>(patches[i].slot) - static_cast<long>(patches[j].slot);
        const double at = std::labs(gap) <= 1 ? sim : 0.0;
        const double au = patches[i].user_id == patches[j].user_id ? sim : 0.0;
        const bool hi = patches[i].role == Role::kHost, hj = patches[j].role == Role::kHost;
        const double ar = hi != hj ? sim : 0.0;
        const double aa = std::max(0.0, sim - std::max({at, au, ar}));
        worst = std::max({worst, std::abs(rel.temporal(i, j) - at), std::abs(rel.user(i, j) - au),
                          std::abs(rel.role(i, j) - ar), std::abs(rel.auxiliary(i, j) - aa)});
      }
  }
  return {worst <= 1e-12, strf("200 sets, max |diff| %.2e (tol 1e-12)", worst)};
}

// 2 -------------------------------------------------------------------------

Outcome fusion_stochastic() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> nd(1, 40), dd(1, 32);
  std::normal_distribution<double> w(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = nd(rng), d = dd(rng);
    const auto patches = random_patches(n, rng);
    const Matrix e = testing::random_matrix(n, d, rng);
    const std::array<double, kRelationCount> gamma{w(rng), w(rng), w(rng), w(rng)};
    const Matrix plain = fuse_adjacency(build_relation_adjacency(e, patches), gamma);

    ag::Tape t;
    Matrix gw(1, kRelationCount);
    for (std::size_t r = 0; r < kRelationCount; ++r) gw(0, r) = gamma[r];
    const Matrix taped = t.value(relation_bias(t, t.constant(e), patches, t.constant(gw)));
    if (plain.rows() != n + 1 || taped.rows() != n + 1) return {false, "wrong A^G shape"};
    for (const Matrix* m : {&plain, &taped})
      for (std::size_t i = 0; i <= n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j <= n; ++j) sum += (*m)(i, j);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
  }
  return {worst <= 1e-6, strf("200 trials incl. CLS row, max |row sum - 1| %.2e (tol 1e-6)", worst)};
}

// 3 -------------------------------------------------------------------------

Outcome bias_ablation() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig cfg = testing::tiny_config();
    const std::size_t heads[] = {1, 2, 4};
    cfg.n_heads = heads[trial % 3];
    cfg.d_k = cfg.n_heads * (2 + trial % 3);
    cfg.n_graph_layers = 1 + trial % 2;
    const PatchNet model(cfg, 1000 + static_cast<std::uint64_t>(trial));
    const reference::Reference ref(model);
    const std::size_t n = 1 + rng() % 8;
    const Matrix pe = testing::random_matrix(n, cfg.d_k, rng);

    ag::Tape t;
    const auto g = model.graph_forward(t, t.constant(pe), t.constant(Matrix(n + 1, n + 1)), {});
    Mat x{ref.p("cls")[0]};
    for (const auto& row : reference::to_mat(pe)) x.push_back(row);
    for (std::size_t l = 0; l < cfg.n_graph_layers; ++l) x = ref.block(x, "graph" + std::to_string(l), nullptr);
    const Matrix& cls = t.value(g.session_embedding);
    const Matrix& refined = t.value(g.refined);
    for (std::size_t c = 0; c < cfg.d_k; ++c) {
      worst = std::max(worst, std::abs(cls(0, c) - x[0][c]));
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(refined(i, c) - x[i + 1][c]));
    }
  }
  return {worst <= 1e-5, strf("50 tiny models, max |diff| %.2e (tol 1e-5)", worst)};
}

// 4 -------------------------------------------------------------------------

distill::TeacherRecord teacher_for(const PreparedSession& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  distill::TeacherRecord rec;
  rec.session_id = s.id();
  rec.session_risk = u(rng);
  for (const auto& p : s.patches) rec.patches.push_back({p.user_id, p.slot, u(rng), u(rng)});
  return rec;
}

Outcome gradient_check() {
  const auto cfg = testing::tiny_config();
  PatchNet model(cfg, 44);
  const auto s = testing::three_patch_session(cfg.d_text);
  if (s.patches.size() != 3 || cfg.d_k != 8) return {false, "fixture is not d_k=8 with 3 patches"};
  std::mt19937_64 rng(404);
  const auto target = distill::resolve_teacher(s, teacher_for(s, rng));
  if (!target) return {false, "teacher did not resolve"};
  const distill::LossWeights w{1.0, 1.0};
  ag::Tape probe;
  const auto parts = distill::session_objective(probe, model, s, &*target, w, {}).parts;
  if (!(parts.patch > 0.0 && parts.patch_to_session > 0.0)) return {false, "a loss term is inactive"};
  const double err = testing::gradient_check(
      model.params(),
      [&](ag::Tape& t, const ag::ParameterSet&) { return distill::session_objective(t, model, s, &*target, w, {}).total; },
      1e-5);
  return {err < 1e-4, strf("%zu parameters, max relative error %.2e (tol 1e-4)", model.params().scalar_count(), err)};
}

// 5 -------------------------------------------------------------------------

Outcome retrieval_exact() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> nd;
  std::size_t violations = 0, mismatches = 0, queries = 0, largest = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = trial < 5 ? 10000 : 1 + rng() % 3000;
    const std::size_t d = 2 + rng() % 63;
    const std::size_t n_sessions = 1 + rng() % 50;
    largest = std::max(largest, n);
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
      IndexEntry e;
      if (i > 0 && rng() % 20 == 0) {
        e.embedding = entries[rng() % i].embedding;  // exact duplicates exercise the tie order
      } else {
        e.embedding.resize(d);
        for (auto& v : e.embedding) v = nd(rng);
      }
      e.summary = "s";
      e.meta = {"sess" + std::to_string(rng() % n_sessions), "u" + std::to_string(i % 11),
                i % 4 ? Role::kViewer : Role::kHost, 1 + i % 18};
      entries.push_back(std::move(e));
    }
    const auto idx = PatchIndex::build(entries);
    for (int q = 0; q < 5; ++q) {
      std::vector<double> query(d);
      for (auto& v : query) v = nd(rng);
      const std::string sess = "sess" + std::to_string(rng() % n_sessions);
      double qn = 0.0;
      for (double v : query) qn += v * v;
      qn = std::sqrt(qn);
      std::vector<std::pair<double, std::size_t>> scan;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx.meta(r).session_id == sess) continue;
        const auto row = idx.embedding(r);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          s += static_cast<double>(static_cast<float>(query[c] / qn)) * static_cast<double>(row[c]);
        scan.emplace_back(-s, r);
      }
      std::sort(scan.begin(), scan.end());
      for (std::size_t k : {1u, 5u, 10u}) {
        ++queries;
        const auto got = idx.retrieve(query, sess, k);
        if (got.size() != std::min(k, scan.size())) ++mismatches;
        for (std::size_t i = 0; i < got.size(); ++i) {
          if (idx.meta(got[i].entry).session_id == sess) ++violations;
          if (i < scan.size() && got[i].entry != scan[i].second) ++mismatches;
        }
      }
    }
  }
  return {violations == 0 && mismatches == 0,
          strf("100 indexes (up to %zu rows), %zu queries, %zu mismatches, %zu exclusion violations", largest, queries,
              mismatches, violations)};
}

// 6 -------------------------------------------------------------------------

Outcome key_patch_caps() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> coin(0, 2), slot(1, 18), coarse(0, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t over_cap = 0, mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const bool ties = trial % 2 == 0;
    std::vector<PatchMeta> patches;
    ForwardOutput f;
    f.session_score = u(rng);
    f.refined_patches = Matrix(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      PatchMeta m;
      m.role = coin(rng) == 0 ? Role::kHost : Role::kViewer;
      m.user_id = m.role == Role::kHost ? "host" : "v" + std::to_string(i % 6);
      m.slot = static_cast<std::size_t>(slot(rng));
      patches.push_back(m);
      f.cls_attention.push_back(ties ? coarse(rng) : u(rng));
      f.refined_patches(i, 0) = static_cast<double>(i);
    }
    double z = 0.0;
    for (double a : f.cls_attention) z += a;
    for (double& a : f.cls_attention) a = z > 0.0 ? a / z : 1.0 / static_cast<double>(n);

    const auto sel = select_key_patches(f, patches, "s", SelectionPurpose::kQuery);
    if (!sel) {
      ++mismatches;
      continue;
    }
    if (sel->host.size() > 5 || sel->viewer.size() > 3) ++over_cap;
    for (Role r : {Role::kHost, Role::kViewer}) {
      std::vector<std::tuple<double, std::size_t, std::size_t>> keyed;
      for (std::size_t i = 0; i < n; ++i)
        if (patches[i].role == r) keyed.emplace_back(-f.cls_attention[i], patches[i].slot, i);
      std::sort(keyed.begin(), keyed.end());
      keyed.resize(std::min<std::size_t>(r == Role::kHost ? 5 : 3, keyed.size()));
      const auto& got = r == Role::kHost ? sel->host : sel->viewer;
      if (got.size() != keyed.size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < got.size(); ++i) {
        const std::size_t want = std::get<2>(keyed[i]);
        if (got[i].patch != want || got[i].slot != patches[want].slot || got[i].user_id != patches[want].user_id ||
            got[i].embedding.at(0) != static_cast<double>(want))
          ++mismatches;
      }
    }
  }
  return {over_cap == 0 && mismatches == 0,
          strf("500 outputs, %zu over cap, %zu oracle mismatches", over_cap, mismatches)};
}

// 7 -------------------------------------------------------------------------

Outcome loss_identities() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  double reduce_diff = 0.0, grad_diff = 0.0, mean_diff = 0.0, scale_diff = 0.0;

  const auto cfg = testing::tiny_config();
  const std::vector<PreparedSession> sessions{testing::two_patch_session(cfg.d_text),
                                              testing::three_patch_session(cfg.d_text)};
  for (int trial = 0; trial < 10; ++trial) {
    PatchNet model(cfg, 70 + static_cast<std::uint64_t>(trial));
    const auto& s = sessions[static_cast<std::size_t>(trial) % 2];
    const auto target = distill::resolve_teacher(s, teacher_for(s, rng));
    ag::GradBuffer ga(model.params()), gb(model.params());
    double va = 0.0, vb = 0.0;
    {
      ag::Tape t(&ga);
      const auto full = distill::session_objective(t, model, s, &*target, {0.0, 0.0}, {});
      va = t.value(full.total)(0, 0);
      t.backward(full.total);
    }
    {
      ag::Tape t(&gb);
      const auto v = model.forward(t, s, {});
      const auto ls = ag::bce_with_logits_sum(t, v.graph.session_logit, {static_cast<double>(s.label())});
      vb = t.value(ls)(0, 0);
      t.backward(ls);
    }
    reduce_diff = std::max(reduce_diff, std::abs(va - vb));
    for (std::size_t p = 0; p < model.params().size(); ++p)
      for (std::size_t i = 0; i < ga[p].storage().size(); ++i)
        grad_diff = std::max(grad_diff, std::abs(ga[p].storage()[i] - gb[p].storage()[i]));
  }

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> preds(n), sal(n);
    for (auto& p : preds) p = u(rng);
    for (auto& s : sal) s = u(rng);
    double mean = 0.0;
    for (double p : preds) mean += p / static_cast<double>(n);
    const double c = std::pow(10.0, -3.0 + 6.0 * u(rng));
    mean_diff = std::max(mean_diff, std::abs(distill::saliency_aggregate(preds, std::vector<double>(n, c)) - mean));

    const double target = u(rng);
    std::vector<double> scaled = sal;
    for (auto& s : scaled) s *= c;
    scale_diff = std::max(scale_diff, std::abs(distill::patch_to_session_loss(preds, scaled, target) -
                                               distill::patch_to_session_loss(preds, sal, target)));
    ag::Tape t;
    Matrix col(n, 1);
    for (std::size_t i = 0; i < n; ++i) col(i, 0) = preds[i];
    const auto pv = t.constant(col);
    const double a = t.value(distill::patch_to_session_loss(t, pv, sal, target))(0, 0);
    const double b = t.value(distill::patch_to_session_loss(t, pv, scaled, target))(0, 0);
    scale_diff = std::max(scale_diff, std::abs(a - b));
  }
  const bool pass = reduce_diff == 0.0 && grad_diff == 0.0 && mean_diff <= 1e-12 && scale_diff <= 1e-12;
  return {pass, strf("beta=gamma=0: value diff %.1e grad diff %.1e (exact); uniform-saliency mean %.1e, "
                    "saliency scaling %.1e (tol 1e-12)",
                    reduce_diff, grad_diff, mean_diff, scale_diff)};
}

// 8 -------------------------------------------------------------------------

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

std::vector<Confusion> enumerate(const eval::ScoredSet& s) {
  std::set<double, std::greater<>> thresholds(s.scores.begin(), s.scores.end());
  std::vector<Confusion> out;
  for (double t : thresholds) {
    Confusion c;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool pred = s.scores[i] >= t;
      if (s.labels[i] == 1) (pred ? c.tp : c.fn) += 1;
      else (pred ? c.fp : c.tn) += 1;
    }
    out.push_back(c);
  }
  return out;
}

eval::MetricReport oracle_metrics(const eval::ScoredSet& s) {
  eval::MetricReport m;
  m.recall_at_fpr = 0.0;
  m.fpr_at_recall = 1.0;
  double prev = 0.0;
  for (const auto& c : enumerate(s)) {
    const double recall = c.tp / (c.tp + c.fn), fpr = c.fp / (c.fp + c.tn);
    m.pr_auc += (recall - prev) * (c.tp / (c.tp + c.fp));
    prev = recall;
    m.f1 = std::max(m.f1, 2 * c.tp / (2 * c.tp + c.fp + c.fn));
    if (fpr <= 0.1) m.recall_at_fpr = std::max(m.recall_at_fpr, recall);
    if (recall >= 0.9) m.fpr_at_recall = std::min(m.fpr_at_recall, fpr);
  }
  return m;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> size(2, 100), coarse(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    const bool ties = trial % 2 == 0;
    eval::ScoredSet s;
    for (int i = 0; i < n; ++i) s.add("s" + std::to_string(i), ties ? coarse(rng) / 10.0 : u(rng), u(rng) < 0.3);
    s.labels[0] = 1;
    s.labels[1] = 0;
    const auto got = eval::evaluate(s), want = oracle_metrics(s);
    mismatches += got.pr_auc != want.pr_auc || got.f1 != want.f1 || got.recall_at_fpr != want.recall_at_fpr ||
                  got.fpr_at_recall != want.fpr_at_recall;
  }
  eval::ScoredSet perfect;
  for (int i = 0; i < 20; ++i) perfect.add("p" + std::to_string(i), 1.0 - i / 40.0, i < 6 ? 1 : 0);
  const auto p = eval::evaluate(perfect);
  const bool sep = p.pr_auc == 1.0 && p.f1 == 1.0 && p.recall_at_fpr == 1.0 && p.fpr_at_recall == 0.0;
  return {mismatches == 0 && sep,
          strf("100 sets, %d mismatches; perfect separation PR-AUC %.3f F1 %.3f R@0.1FPR %.3f FPR@0.9R %.3f",
              mismatches, p.pr_auc, p.f1, p.recall_at_fpr, p.fpr_at_recall)};
}

// 9 -------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome prompt_suite(const fs::path& fixtures) {
  const fs::path sg = fixtures / "summary_prompt.golden.txt", rg = fixtures / "reasoning_prompt.golden.txt";
  if (!fs::exists(sg) || !fs::exists(rg)) return {false, "golden fixtures missing under " + fixtures.string()};
  const bool golden = llm::build_summary_prompt(testing::summary_request()) == slurp(sg) &&
                      llm::build_reasoning_prompt(testing::reasoning_request()) == slurp(rg);

  bool appendix = false;
  try {
    const auto j = llm::parse_reasoning_response("Judgment follows.\n" + testing::kGoodReasoning, {1, 2});
    appendix = j.patches.size() == 2 && j.primary_risk_type == llm::RiskType::kFraud && !j.teacher_missing;
    appendix = appendix && llm::parse_summary_response(testing::kGoodReasoning, {1, 2}).size() == 2;
  } catch (const std::exception&) {
  }

  const std::vector<std::pair<std::string, std::string>> mutations{
      {"\"risk_score\": 0.9", "\"risk_score\": 1.3"},  {"\"saliency\": 0.3", "\"saliency\": -0.1"},
      {"\"saliency\": 0.3", "\"saliency\": \"high\""}, {"\"fraud\"", "\"scam\""},
      {"0.85", "2"},                                   {"true", "\"yes\""},
      {"\"patch_id\": 2", "\"patch_id\": 5"},          {", \"saliency\": 0.7", ""},
      {"{", "I cannot help with that. "},
  };
  int malformed_ok = 0;
  for (const auto& [from, to] : mutations) {
    std::string bad = testing::kGoodReasoning;
    bad.replace(bad.find(from), from.size(), to);
    try {
      llm::parse_reasoning_response(bad, {1, 2});
    } catch (const ParseError&) {
      ++malformed_ok;
    }
  }

  synth::SynthConfig cfg;
  cfg.n_sessions = 120;
  cfg.positive_rate = 0.25;
  const auto data = synth::generate_dataset(cfg);
  const HashingEmbedder embedder(cfg.d_text);
  std::size_t parsed = 0, total = 0;
  for (const auto& s : data.sessions) {
    const auto prepared = prepare_session(s, cfg.discretization, embedder, 1024);
    llm::ReasoningRequest rr{s.session_id, {}};
    llm::SummaryRequest sr{s.session_id, {}};
    std::vector<int> ids;
    for (std::size_t k = 0; k < prepared.patches.size() && k < llm::kMaxPromptPatches; ++k) {
      const auto& p = prepared.patches[k];
      const auto desc = llm::describe_patch(s, p, cfg.discretization.slot_width);
      const int id = static_cast<int>(k + 1);
      rr.patches.push_back({id, desc, "", p.user_id, p.slot});
      sr.patches.push_back({id, desc, p.user_id, p.slot});
      ids.push_back(id);
    }
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      total += 2;
      try {
        parsed += llm::parse_reasoning_response(llm::mock_reasoning_response(rr, data.truth, seed), ids)
                      .patches.size() == ids.size();
        parsed += llm::parse_summary_response(llm::mock_summary_response(sr, data.truth, seed), ids).size() ==
                  ids.size();
      } catch (const std::exception&) {
      }
    }
  }
  const bool pass =
      golden && appendix && malformed_ok == static_cast<int>(mutations.size()) && parsed == total && total > 0;
  return {pass, strf("goldens %s, appendix format %s, malformed rejected %d/%zu, mock parse %zu/%zu",
                    golden ? "match" : "DIFFER", appendix ? "parses" : "FAILS", malformed_ok, mutations.size(), parsed,
                    total)};
}

// 10-12 ---------------------------------------------------------------------

struct EndToEnd {
  pipeline::PipelineConfig cfg;
  pipeline::AblationTable table;
  double seconds = 0.0;
  std::size_t llm_calls = 0;
  std::size_t retrieval_calls = 0;
  std::string error;
};

class Harness {
 public:
  Harness(fs::path config, fs::path out) : config_(std::move(config)), out_(std::move(out)) {}

  const EndToEnd& e2e() {
    if (e2e_) return *e2e_;
    e2e_.emplace();
    auto& r = *e2e_;
    try {
      r.cfg = pipeline::load_config(config_);
      r.cfg.out_dir = out_;
      r.cfg.llm.mock = true;
      r.cfg.data = {};
      fs::remove_all(out_ / "data");
      fs::remove_all(out_ / "ablation");
      counters::reset();
      const auto start = std::chrono::steady_clock::now();
      r.table = pipeline::run_ablation(r.cfg, {distill::AblationMode::kFull, distill::AblationMode::kNoDistill},
                                       {1, 2, 3});
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      r.llm_calls = counters::llm_calls().load();
      r.retrieval_calls = counters::retrieval_calls().load();
      r.table.write_csv(out_ / "ablation.csv");
      r.table.write_json(out_ / "ablation.json");
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  }

  Outcome directional() {
    const auto& r = e2e();
    if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
    const auto med = r.table.medians();
    if (!med.contains("full") || !med.contains("no_D")) return {false, "missing ablation rows"};
    const double full = med.at("full").pr_auc, no_d = med.at("no_D").pr_auc;
    std::string seeds;
    for (const auto& row : r.table.rows) seeds += strf(" %s/%llu=%.4f", row.mode.c_str(),
                                                      static_cast<unsigned long long>(row.seed), row.test.pr_auc);
    const bool pass = full >= no_d && full - no_d >= 0.01 && r.seconds < 1800.0;
    return {pass, strf("median test PR-AUC full %.4f, no_D %.4f, margin %+.4f (need >= +0.01); pipeline %.0f s "
                      "(limit 1800 s);",
                      full, no_d, full - no_d, r.seconds) +
                      seeds};
  }

  Outcome localization() {
    const auto& r = e2e();
    if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
    std::size_t tp = 0, hits = 0;
    std::string per_seed;
    for (const auto& row : r.table.rows) {
      if (row.mode != "full" || !row.localization) continue;
      tp += row.localization->true_positives;
      hits += row.localization->hits;
      per_seed += strf(" seed%llu=%zu/%zu", static_cast<unsigned long long>(row.seed), row.localization->hits,
                      row.localization->true_positives);
    }
    const double rate = tp ? static_cast<double>(hits) / static_cast<double>(tp) : 0.0;
    return {tp > 0 && rate >= 0.6,
            strf("full model, argmax patch on a planted cell for %zu/%zu true positives = %.3f (need >= 0.600);", hits,
                tp, rate) +
                per_seed};
  }

  Outcome inference_independence() {
    const auto& r = e2e();
    if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
    if (r.llm_calls == 0 || r.retrieval_calls == 0)
      return {false, "counters stayed at zero during training, so they prove nothing"};
    const fs::path ckpt = out_ / "ablation" / "seed1" / "full.ckpt";
    const fs::path cfg_file = out_ / "acceptance_config.json";
    std::ofstream(cfg_file) << nlohmann::json(r.cfg).dump(2) << '\n';
    counters::reset();
    const int code = cli::run({"--config", cfg_file.string(), "--out", (out_ / "infer").string(), "--quiet",
                               "--mock-llm", "infer", "--checkpoint", ckpt.string(), "--sessions",
                               (out_ / "data" / "test.jsonl").string()});
    const std::size_t retrieval = counters::retrieval_calls().load(), llm_calls = counters::llm_calls().load();
    return {code == 0 && retrieval == 0 && llm_calls == 0,
            strf("infer exit %d, retrieval calls %zu, LLM calls %zu (training used %zu and %zu)", code, retrieval,
                llm_calls, r.retrieval_calls, r.llm_calls)};
  }

 private:
  fs::path config_, out_;
  std::optional<EndToEnd> e2e_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string config = CSVAR_SOURCE_DIR "/configs/reference.json";
  std::string out = "acceptance_run";
  std::string fixtures = CSVAR_SOURCE_DIR "/tests/fixtures";
  std::vector<int> only;
  bool verbose = false;
  app.add_option("--config", config, "pipeline config for the end-to-end criteria");
  app.add_option("--out", out, "working directory for the end-to-end run");
  app.add_option("--fixtures", fixtures, "golden prompt directory");
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_flag("--verbose", verbose, "keep pipeline logging");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  Harness harness(config, out);
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: covered inside the check
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "adjacency oracle equivalence", 10, adjacency_oracle},
      {2, "fusion stochasticity", 5, fusion_stochastic},
      {3, "bias-ablation equivalence", 30, bias_ablation},
      {4, "objective gradient check", 60, gradient_check},
      {5, "retrieval exactness and exclusion", 60, retrieval_exact},
      {6, "key-patch caps", 10, key_patch_caps},
      {7, "loss identities", 0, loss_identities},
      {8, "metric oracles", 0, metric_oracles},
      {9, "prompt and parse golden suite", 0, [&] { return prompt_suite(fixtures); }},
      {10, "end-to-end full vs no_D", 0, [&] { return harness.directional(); }},
      {11, "localization sanity", 0, [&] { return harness.localization(); }},
      {12, "inference independence", 0, [&] { return harness.inference_independence(); }},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = strf("%.1f s", secs);
    if (c.limit_seconds > 0) {
      timing += strf(" of %.0f s", c.limit_seconds);
      if (secs >= c.limit_seconds) o.pass = false;
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
