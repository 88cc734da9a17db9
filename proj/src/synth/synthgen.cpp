#include "csvar/synth/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "csvar/core/error.hpp"
#include "csvar/synth/text_embedder.hpp"
#include "json.hpp"

namespace csvar::synth {
namespace {

using Rng = std::mt19937_64;

const std::array<std::vector<std::string>, kPhaseCount> kLexicon{{
    {"exclusive benefits", "big discount", "insider information", "special offer", "bonus package",
     "vip welfare", "free trial", "member price", "secret method", "guaranteed returns", "hidden perks",
     "lucky draw"},
    {"i earned a lot", "it really works", "got my payout today", "teacher is reliable", "already made money",
     "tried it and won", "my friend got rich", "trust this method", "best decision ever", "paid back in a day"},
    {"limited time", "limited slots", "last chance", "only today", "hurry up", "few places left", "ending soon",
     "act now", "final call", "do not miss"},
    {"add my contact", "join private group", "move to the app", "scan the code", "check my profile link",
     "get on the car", "drive with us", "one on one chat", "dm for details", "download the client"},
}};

const std::vector<std::string> kSignatures{"goldline", "luckystar", "jadegate", "redlantern", "moonbay",
                                           "silkroute", "tigerpeak", "pearlnet", "dragonwin", "cloudnine",
                                           "sunharbor", "amberkey"};

const std::vector<std::vector<std::string>> kTopics{
    {"recipe", "noodles", "garlic", "spicy", "sauce", "wok", "dumpling", "kitchen", "taste", "fried", "rice",
     "pepper", "boil", "soup", "delicious", "chef", "ingredients", "steam", "fresh", "pork"},
    {"level", "boss", "ranked", "match", "combo", "skill", "team", "loot", "quest", "hero", "map", "strategy",
     "victory", "build", "respawn", "sniper", "upgrade", "dungeon", "arena", "clutch"},
    {"song", "guitar", "melody", "lyrics", "chorus", "piano", "rhythm", "concert", "singer", "cover", "ballad",
     "tune", "album", "drums", "encore", "harmony", "beat", "vocal", "stage", "request"},
    {"mountain", "trail", "camping", "river", "sunset", "hiking", "forest", "tent", "view", "breeze", "lake",
     "fishing", "valley", "campfire", "clouds", "summit", "wildlife", "path", "weather", "backpack"},
    {"jacket", "size", "fabric", "order", "cart", "price", "shipping", "discount", "stock", "color", "brand",
     "quality", "coupon", "deal", "sale", "limited", "time", "cotton", "return", "style"},
};

const std::vector<std::string> kChatter{"hello", "nice", "love this", "haha", "wow", "good evening",
                                        "where are you from", "so cool", "666", "beautiful", "again please",
                                        "first time here", "good night", "thanks", "great stream", "lol",
                                        "hi everyone", "amazing", "keep going", "sounds good"};

std::string phrase_for_action(ActionType type, Rng& rng) {
  static const std::vector<std::string> gifts{"rose", "rocket", "heart", "crown", "star"};
  std::uniform_int_distribution<std::size_t> g(0, gifts.size() - 1);
  switch (type) {
    case ActionType::kEntry:
      return "joined the room";
    case ActionType::kGift:
      return "sent " + gifts[g(rng)];
    case ActionType::kLike:
      return "";
    case ActionType::kShare:
      return "shared the stream";
    case ActionType::kLeaderboard:
      return "top fan";
    case ActionType::kGroupJoin:
      return "joined fan group";
    case ActionType::kCoStreamRequest:
      return "requested co stream";
    case ActionType::kStreamStart:
      return "stream started";
    default:
      return "";
  }
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

std::string words(const std::vector<std::string>& pool, std::size_t lo, std::size_t hi, Rng& rng) {
  std::uniform_int_distribution<std::size_t> n(lo, hi);
  const std::size_t count = n(rng);
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += pick(pool, rng);
  }
  return out;
}

std::string join_text(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return a + " " + b;
}

std::vector<ScamTemplate> make_templates(std::size_t n, Rng& rng) {
  std::vector<ScamTemplate> out;
  for (std::size_t t = 0; t < n; ++t) {
    ScamTemplate tpl;
    tpl.template_id = "t" + std::to_string(t);
    tpl.category = static_cast<RiskCategory>(t % 3);
    tpl.signature = t < kSignatures.size() ? kSignatures[t] : "brand" + std::to_string(t);
    for (std::size_t p = 0; p < kPhaseCount; ++p) {
      PhaseSpec spec;
      spec.phase = static_cast<Phase>(p);
      const auto phase = spec.phase;
      if (phase == Phase::kTestimonial) {
        spec.role = Role::kViewer;
        spec.action_types = {ActionType::kComment};
      } else if (phase == Phase::kRedirect) {
        spec.role = (t % 2 == 0) ? Role::kHost : Role::kViewer;
        spec.action_types = spec.role == Role::kHost
                                ? std::vector<ActionType>{ActionType::kSpeechTranscript, ActionType::kOcrContent}
                                : std::vector<ActionType>{ActionType::kComment, ActionType::kGroupJoin};
      } else {
        spec.role = Role::kHost;
        spec.action_types = {ActionType::kSpeechTranscript, ActionType::kOcrContent};
      }
      std::vector<std::string> lex = kLexicon[p];
      std::shuffle(lex.begin(), lex.end(), rng);
      spec.keywords.assign(lex.begin(), lex.begin() + 3);
      tpl.phases.push_back(std::move(spec));
    }
    out.push_back(std::move(tpl));
  }
  return out;
}

struct Draft {
  std::vector<Action> actions;
};

Action make_action(const std::string& user, double t, ActionType type, std::string text) {
  Action a;
  a.user_id = user;
  a.timestamp = t;
  a.type = type;
  a.raw_text = std::move(text);
  return a;
}

}  // namespace

std::string_view to_string(Phase phase) {
  static constexpr std::array<std::string_view, kPhaseCount> names{"promotion", "testimonial", "urgency",
                                                                   "redirect"};
  return names[static_cast<std::size_t>(phase)];
}

Phase parse_phase(std::string_view name) {
  for (std::size_t i = 0; i < kPhaseCount; ++i)
    if (to_string(static_cast<Phase>(i)) == name) return static_cast<Phase>(i);
  throw ParseError("unknown phase: " + std::string(name));
}

std::string_view to_string(RiskCategory category) {
  switch (category) {
    case RiskCategory::kFraud:
      return "fraud";
    case RiskCategory::kGambling:
      return "gambling";
    case RiskCategory::kSexual:
      return "sexual";
  }
  return "fraud";
}

RiskCategory parse_risk_category(std::string_view name) {
  for (auto c : {RiskCategory::kFraud, RiskCategory::kGambling, RiskCategory::kSexual})
    if (to_string(c) == name) return c;
  throw ParseError("unknown risk category: " + std::string(name));
}

void ScamTemplate::validate() const {
  if (phases.empty()) throw ConfigError("template " + template_id + " has no phases");
  for (const auto& p : phases)
    if (p.keywords.empty()) throw ConfigError("template " + template_id + " has a phase without keywords");
}

void SynthConfig::validate() const {
  if (n_sessions == 0) throw ConfigError("synth: n_sessions must be positive");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ConfigError("synth: positive_rate must lie in (0, 1)");
  if (n_templates == 0) throw ConfigError("synth: n_templates must be positive");
  if (min_viewers == 0 || min_viewers > max_viewers) throw ConfigError("synth: bad viewer range");
  if (min_actions == 0 || min_actions > max_actions) throw ConfigError("synth: bad action range");
  if (d_text == 0) throw ConfigError("synth: d_text must be positive");
  discretization.validate();
  if (discretization.slot_count() < kPhaseCount)
    throw ConfigError("synth: more phases than timeslots; cannot place a chain in distinct slots");
  for (double r : {decoy_rate, phase_drop_rate, signature_leak_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("synth: rates must lie in [0, 1]");
}

std::size_t SynthConfig::positive_count() const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_sessions) * positive_rate + 0.5));
}

SyntheticDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng master(cfg.seed);
  SyntheticDataset ds;
  ds.templates = make_templates(cfg.n_templates, master);
  for (const auto& t : ds.templates) t.validate();

  const std::size_t n_pos = std::max<std::size_t>(1, std::min(cfg.positive_count(), cfg.n_sessions - 1));
  std::vector<std::size_t> order(cfg.n_sessions);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), master);
  std::vector<int> template_of(cfg.n_sessions, -1);
  for (std::size_t i = 0; i < n_pos; ++i) template_of[order[i]] = static_cast<int>(i % cfg.n_templates);

  const double horizon = cfg.discretization.horizon;
  const double width = cfg.discretization.slot_width;
  const std::size_t slots = cfg.discretization.slot_count();

  for (std::size_t s = 0; s < cfg.n_sessions; ++s) {
    Rng rng(master());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", s);
    Session session;
    session.session_id = id;
    session.host_id = std::string(id) + "_h";
    std::uniform_int_distribution<std::size_t> nv(cfg.min_viewers, cfg.max_viewers);
    std::uniform_int_distribution<std::size_t> na(cfg.min_actions, cfg.max_actions);
    const std::size_t n_viewers = nv(rng);
    const std::size_t n_actions = na(rng);
    const auto& topic = pick(kTopics, rng);
    std::vector<std::string> viewers;
    for (std::size_t v = 0; v < n_viewers; ++v) viewers.push_back(std::string(id) + "_v" + std::to_string(v));

    Draft d;
    auto t_in = [&](double lo, double hi) { return std::min(lo + unit(rng) * (hi - lo), horizon); };
    d.actions.push_back(make_action(session.host_id, t_in(0.0, 3.0), ActionType::kStreamStart, "stream started"));
    const std::size_t n_host = std::max<std::size_t>(2, n_actions / 4);
    for (std::size_t i = 1; i < n_host; ++i) {
      const ActionType type = unit(rng) < 0.7 ? ActionType::kSpeechTranscript : ActionType::kOcrContent;
      d.actions.push_back(make_action(session.host_id, t_in(0.0, horizon), type, words(topic, 4, 8, rng)));
    }
    // Viewer activity falls off with rank; everyone enters before acting.
    std::vector<double> weight(n_viewers), entry(n_viewers);
    for (std::size_t v = 0; v < n_viewers; ++v) {
      weight[v] = 1.0 / std::pow(static_cast<double>(v + 1), 0.8);
      entry[v] = t_in(0.0, horizon * 0.6);
      d.actions.push_back(make_action(viewers[v], entry[v], ActionType::kEntry, "joined the room"));
    }
    std::discrete_distribution<std::size_t> who(weight.begin(), weight.end());
    std::discrete_distribution<int> kind({50, 20, 10, 5, 5, 5, 5});
    static constexpr std::array<ActionType, 7> kViewerTypes{
        ActionType::kComment, ActionType::kLike,      ActionType::kGift,           ActionType::kShare,
        ActionType::kLeaderboard, ActionType::kGroupJoin, ActionType::kCoStreamRequest};
    while (d.actions.size() < n_actions) {
      const std::size_t v = who(rng);
      const ActionType type = kViewerTypes[kind(rng)];
      std::string text = type == ActionType::kComment
                             ? join_text(pick(kChatter, rng), unit(rng) < 0.4 ? words(topic, 1, 2, rng) : "")
                             : phrase_for_action(type, rng);
      d.actions.push_back(make_action(viewers[v], t_in(entry[v], horizon), type, std::move(text)));
    }

    // Decoys: isolated phrases from the same families, no chain structure.
    for (std::size_t p = 0; p < kPhaseCount; ++p) {
      if (unit(rng) >= cfg.decoy_rate) continue;
      const bool by_host = unit(rng) < 0.5;
      const std::string& user = by_host ? session.host_id : pick(viewers, rng);
      std::string text = join_text(by_host ? words(topic, 2, 4, rng) : pick(kChatter, rng), pick(kLexicon[p], rng));
      if (unit(rng) < cfg.signature_leak_rate) text = join_text(text, pick(ds.templates, rng).signature);
      const ActionType type = by_host ? ActionType::kSpeechTranscript : ActionType::kComment;
      d.actions.push_back(make_action(user, t_in(0.0, horizon), type, std::move(text)));
    }

    std::vector<TruthCell> cells;
    if (template_of[s] >= 0) {
      const ScamTemplate& tpl = ds.templates[static_cast<std::size_t>(template_of[s])];
      std::vector<std::size_t> kept;
      for (std::size_t p = 0; p < tpl.phases.size(); ++p)
        if (unit(rng) >= cfg.phase_drop_rate) kept.push_back(p);
      // Keep at least one host phase and one shill phase.
      for (Role role : {Role::kHost, Role::kViewer}) {
        std::vector<std::size_t> of_role;
        bool present = false;
        for (std::size_t p = 0; p < tpl.phases.size(); ++p) {
          if (tpl.phases[p].role != role) continue;
          of_role.push_back(p);
          present |= std::find(kept.begin(), kept.end(), p) != kept.end();
        }
        if (!present && !of_role.empty()) kept.push_back(pick(of_role, rng));
      }
      while (kept.size() < std::min<std::size_t>(2, tpl.phases.size())) {
        std::uniform_int_distribution<std::size_t> any(0, tpl.phases.size() - 1);
        const std::size_t p = any(rng);
        if (std::find(kept.begin(), kept.end(), p) == kept.end()) kept.push_back(p);
      }
      std::sort(kept.begin(), kept.end());
      // Distinct, increasing slots for the kept phases.
      std::vector<std::size_t> slot_pool(slots);
      std::iota(slot_pool.begin(), slot_pool.end(), 1);
      std::shuffle(slot_pool.begin(), slot_pool.end(), rng);
      std::vector<std::size_t> chain_slots(slot_pool.begin(), slot_pool.begin() + kept.size());
      std::sort(chain_slots.begin(), chain_slots.end());
      const std::size_t n_shills = unit(rng) < 0.5 ? 1 : 2;
      std::vector<std::string> shills(viewers.end() - std::min(n_shills, viewers.size()), viewers.end());

      std::set<std::pair<std::string, std::size_t>> seen;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const PhaseSpec& spec = tpl.phases[kept[i]];
        const std::size_t slot = chain_slots[i];
        const std::string& user = spec.role == Role::kHost ? session.host_id : pick(shills, rng);
        std::uniform_int_distribution<int> reps(1, 2);
        const int n = reps(rng);
        for (int r = 0; r < n; ++r) {
          const double lo = static_cast<double>(slot - 1) * width;
          const double t = std::min(lo + unit(rng) * width * 0.999, horizon);
          std::string filler = spec.role == Role::kHost ? words(topic, 1, 3, rng) : pick(kChatter, rng);
          std::string text = join_text(filler, pick(spec.keywords, rng));
          if (spec.phase == Phase::kRedirect || (i + 1 == kept.size() && r == 0)) text = join_text(text, tpl.signature);
          d.actions.push_back(make_action(user, t, pick(spec.action_types, rng), std::move(text)));
        }
        if (seen.insert({user, slot}).second) cells.push_back(TruthCell{user, slot, spec.phase, tpl.template_id, tpl.category});
      }
      session.label = 1;
    } else {
      session.label = 0;
    }

    std::stable_sort(d.actions.begin(), d.actions.end(),
                     [](const Action& a, const Action& b) { return a.timestamp < b.timestamp; });
    session.actions = std::move(d.actions);
    derive_viewers(session);
    ds.truth[session.session_id] = std::move(cells);
    ds.sessions.push_back(std::move(session));
  }
  return ds;
}

bool is_truth_cell(const PatchTruth& truth, const std::string& session_id, const std::string& user_id,
                   std::size_t slot) {
  auto it = truth.find(session_id);
  if (it == truth.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](const TruthCell& c) { return c.user_id == user_id && c.slot == slot; });
}

const std::vector<std::string>& phase_lexicon(Phase phase) { return kLexicon[static_cast<std::size_t>(phase)]; }

double risk_keyword_density(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) return 0.0;
  std::vector<bool> hit(tokens.size(), false);
  auto mark = [&](const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
      if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i)))
        for (std::size_t k = 0; k < phrase.size(); ++k) hit[i + k] = true;
  };
  for (const auto& family : kLexicon)
    for (const auto& p : family) mark(tokenize(p));
  for (const auto& sig : kSignatures) mark({sig});
  const auto n = static_cast<double>(std::count(hit.begin(), hit.end(), true));
  return n / static_cast<double>(tokens.size());
}

void write_truth(const std::filesystem::path& path, const PatchTruth& truth) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [sid, cells] : truth) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells)
      arr.push_back({{"user_id", c.user_id}, {"slot", c.slot}, {"phase", to_string(c.phase)}, {"template_id", c.template_id},
                     {"category", to_string(c.category)}});
    j[sid] = std::move(arr);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

PatchTruth read_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    PatchTruth truth;
    for (const auto& [sid, arr] : j.items()) {
      auto& cells = truth[sid];
      for (const auto& c : arr)
        cells.push_back(TruthCell{c.at("user_id").get<std::string>(), c.at("slot").get<std::size_t>(),
                                  parse_phase(c.at("phase").get<std::string>()), c.value("template_id", std::string()),
                                  parse_risk_category(c.value("category", std::string("fraud")))});
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed truth file: ") + e.what());
  }
}

DatasetSplit split_dataset(const std::vector<Session>& sessions, double train_fraction, double val_fraction,
                           std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(val_fraction >= 0.0) || train_fraction + val_fraction > 1.0)
    throw ConfigError("split fractions must be positive and sum to at most 1");
  Rng rng(seed);
  DatasetSplit out;
  for (int label : {1, 0}) {
    std::vector<const Session*> group;
    for (const auto& s : sessions)
      if (s.label.value_or(0) == label) group.push_back(&s);
    std::shuffle(group.begin(), group.end(), rng);
    const auto n = static_cast<double>(group.size());
    const auto n_train = static_cast<std::size_t>(std::floor(n * train_fraction + 0.5));
    const auto n_val = static_cast<std::size_t>(std::floor(n * val_fraction + 0.5));
    for (std::size_t i = 0; i < group.size(); ++i) {
      auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
      dst.push_back(*group[i]);
    }
  }
  auto by_id = [](const Session& a, const Session& b) { return a.session_id < b.session_id; };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.val.begin(), out.val.end(), by_id);
  std::sort(out.test.begin(), out.test.end(), by_id);
  return out;
}

}  // namespace csvar::synth
