#pragma once

// Synthetic live-stream sessions with planted, recurring scripted risk
// chains. Every positive session carries one template's phase chain spread
// over host and shill patches in distinct timeslots; the same template recurs
// across positives with varied surface wording. Negatives are benign streams
// that may contain isolated risky-looking phrases (decoys) that are not part
// of any chain. Which (user, slot) cells carry a planted phase is recorded in
// a PatchTruth map that only the mock teacher and acceptance checks read.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csvar/session/patch_grid.hpp"
#include "csvar/session/session.hpp"

namespace csvar::synth {

enum class Phase : std::uint8_t { kPromotion, kTestimonial, kUrgency, kRedirect };
inline constexpr std::size_t kPhaseCount = 4;
std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view name);

enum class RiskCategory : std::uint8_t { kFraud, kGambling, kSexual };
std::string_view to_string(RiskCategory category);
RiskCategory parse_risk_category(std::string_view name);

struct PhaseSpec {
  Phase phase = Phase::kPromotion;
  Role role = Role::kHost;  // kViewer means a shill account
  std::vector<ActionType> action_types;
  std::vector<std::string> keywords;  // phrases this template draws from
};

struct ScamTemplate {
  std::string template_id;
  RiskCategory category = RiskCategory::kFraud;
  std::string signature;  // template-specific token carried by the last phase
  std::vector<PhaseSpec> phases;

  // Throws ConfigError if the phase list is empty or a phase has no keywords.
  void validate() const;
};

struct SynthConfig {
  std::size_t n_sessions = 1100;
  // Positives = round(n_sessions * positive_rate), halves rounded up; the
  // default 1/11 gives one positive per ten negatives.
  double positive_rate = 1.0 / 11.0;
  std::size_t n_templates = 6;
  std::size_t min_viewers = 6;
  std::size_t max_viewers = 12;
  std::size_t min_actions = 40;
  std::size_t max_actions = 80;
  std::uint64_t seed = 7;
  std::size_t d_text = 64;
  DiscretizationConfig discretization;
  // Probability, per phase family and session, of an isolated decoy phrase.
  double decoy_rate = 0.3;
  // Probability that a planted phase is left out (at least two always stay).
  double phase_drop_rate = 0.2;
  // Probability that a decoy phrase also carries some template's signature.
  double signature_leak_rate = 0.1;

  void validate() const;
  std::size_t positive_count() const;
};

struct TruthCell {
  std::string user_id;
  std::size_t slot = 0;
  Phase phase = Phase::kPromotion;
  std::string template_id;
  RiskCategory category = RiskCategory::kFraud;
};

// session_id -> planted cells. Every generated session has an entry; benign
// sessions map to an empty list.
using PatchTruth = std::map<std::string, std::vector<TruthCell>>;

struct SyntheticDataset {
  std::vector<Session> sessions;
  PatchTruth truth;
  std::vector<ScamTemplate> templates;
};

SyntheticDataset generate_dataset(const SynthConfig& cfg);

bool is_truth_cell(const PatchTruth& truth, const std::string& session_id, const std::string& user_id,
                   std::size_t slot);

// Phrase lists each phase family draws from.
const std::vector<std::string>& phase_lexicon(Phase phase);
// Fraction of tokens in `text` that belong to a risk-lexicon phrase present in
// the text. 0 for empty text.
double risk_keyword_density(std::string_view text);

void write_truth(const std::filesystem::path& path, const PatchTruth& truth);
PatchTruth read_truth(const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<Session> train;
  std::vector<Session> val;
  std::vector<Session> test;
};

// Label-stratified deterministic split; fractions of train and val, the rest
// goes to test.
DatasetSplit split_dataset(const std::vector<Session>& sessions, double train_fraction, double val_fraction,
                           std::uint64_t seed);

}  // namespace csvar::synth
