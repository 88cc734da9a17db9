#include "csvar/llm/mock_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "csvar/core/error.hpp"
#include "csvar/synth/text_embedder.hpp"
#include "json.hpp"

namespace csvar::llm {
namespace {

using ordered = nlohmann::ordered_json;

const std::vector<synth::TruthCell>& cells_for(const synth::PatchTruth& truth, const std::string& session_id) {
  const auto it = truth.find(session_id);
  if (it == truth.end()) throw OracleError("mock oracle: session " + session_id + " not in truth map");
  return it->second;
}

const synth::TruthCell* planted(const std::vector<synth::TruthCell>& cells, const std::string& user, std::size_t slot) {
  for (const auto& c : cells)
    if (c.user_id == user && c.slot == slot) return &c;
  return nullptr;
}

std::mt19937_64 patch_rng(std::uint64_t seed, const std::string& session_id, int patch_id, std::string_view kind) {
  const std::uint64_t h = fnv1a64(std::string(kind) + "|" + session_id + "|" + std::to_string(patch_id));
  return std::mt19937_64(h ^ (seed * 0x9E3779B97F4A7C15ull));
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

double risk_for(bool hit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return round4(hit ? 0.80 + 0.15 * u(rng) : 0.02 + 0.18 * u(rng));
}

std::vector<std::string> risk_phrases(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::vector<std::string> out;
  for (std::size_t p = 0; p < synth::kPhaseCount; ++p)
    for (const auto& phrase : synth::phase_lexicon(static_cast<synth::Phase>(p)))
      if (lower.find(phrase) != std::string::npos) out.push_back(phrase);
  return out;
}

std::string explain(const std::string& user, const synth::TruthCell* cell, const std::string& text) {
  const auto phrases = risk_phrases(text);
  std::string cues;
  for (const auto& p : phrases) cues += (cues.empty() ? "" : ", ") + ("\"" + p + "\"");
  if (cell != nullptr)
    return user + " carries the " + std::string(synth::to_string(cell->phase)) + " step of a scripted " +
           std::string(synth::to_string(cell->category)) + " chain" + (cues.empty() ? "" : "; cues: " + cues);
  if (!cues.empty()) return user + " uses isolated risky wording (" + cues + ") without a surrounding chain";
  return user + " shows ordinary interaction with no risk cues";
}

struct Aggregate {
  double overall = 0.0;
  RiskType type = RiskType::kNormal;
  bool coordinated = false;
};

Aggregate aggregate(const std::vector<double>& risks, const std::vector<const synth::TruthCell*>& hits) {
  Aggregate a;
  double mx = 0.0, mean = 0.0;
  for (double r : risks) {
    mx = std::max(mx, r);
    mean += r / static_cast<double>(risks.size());
  }
  a.overall = round4(0.5 * mx + 0.5 * mean);
  std::size_t n_hits = 0;
  for (const auto* h : hits) {
    if (h == nullptr) continue;
    if (n_hits++ == 0) a.type = parse_risk_type(synth::to_string(h->category));
  }
  a.coordinated = n_hits >= 2;
  return a;
}

ordered envelope(const std::string& session_id, ordered patches, const Aggregate& agg) {
  return ordered{{"session_id", session_id},
                 {"patches", std::move(patches)},
                 {"session_summary", agg.type == RiskType::kNormal
                                         ? "No coordinated risk chain found."
                                         : "Coordinated " + std::string(to_string(agg.type)) + " script across patches."},
                 {"overall_risk_score", agg.overall},
                 {"primary_risk_type", std::string(to_string(agg.type))},
                 {"coordination_indicators", agg.coordinated}};
}

}  // namespace

std::string mock_summary_response(const SummaryRequest& req, const synth::PatchTruth& truth, std::uint64_t seed) {
  validate(req);
  const auto& cells = cells_for(truth, req.session_id);
  ordered patches = ordered::array();
  std::vector<double> risks;
  std::vector<const synth::TruthCell*> hits;
  for (const auto& p : req.patches) {
    auto rng = patch_rng(seed, req.session_id, p.patch_id, "summary");
    const auto* cell = planted(cells, p.user_id, p.slot);
    const double risk = risk_for(cell != nullptr, rng);
    risks.push_back(risk);
    hits.push_back(cell);
    patches.push_back(
        {{"patch_id", p.patch_id}, {"risk_score", risk}, {"explanation", explain(p.user_id, cell, p.patch_desc)}});
  }
  return envelope(req.session_id, std::move(patches), aggregate(risks, hits)).dump(2);
}

std::string mock_reasoning_response(const ReasoningRequest& req, const synth::PatchTruth& truth,
                                    std::uint64_t seed) {
  validate(req);
  const auto& cells = cells_for(truth, req.session_id);
  ordered patches = ordered::array();
  std::vector<double> risks;
  std::vector<const synth::TruthCell*> hits;
  for (const auto& p : req.patches) {
    auto rng = patch_rng(seed, req.session_id, p.patch_id, "reasoning");
    const auto* cell = planted(cells, p.user_id, p.slot);
    const double risk = risk_for(cell != nullptr, rng);
    const double saliency = round4(0.05 + 0.95 * synth::risk_keyword_density(p.query_patch));
    risks.push_back(risk);
    hits.push_back(cell);
    patches.push_back({{"patch_id", p.patch_id},
                       {"risk_score", risk},
                       {"saliency", saliency},
                       {"explanation", explain(p.user_id, cell, p.query_patch)}});
  }
  return envelope(req.session_id, std::move(patches), aggregate(risks, hits)).dump(2);
}

}  // namespace csvar::llm
