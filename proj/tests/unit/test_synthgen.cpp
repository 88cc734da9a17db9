#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "csvar/core/error.hpp"
#include "csvar/session/dataset_io.hpp"
#include "csvar/synth/synthgen.hpp"
#include "csvar/synth/text_embedder.hpp"

using namespace csvar;
using namespace csvar::synth;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_sessions = 220;
  cfg.seed = 11;
  return cfg;
}

std::string serialize(const std::vector<Session>& sessions) {
  std::string out;
  for (const auto& s : sessions) out += session_to_json_line(s) + "\n";
  return out;
}

// Independent reimplementation of FNV-1a 64 and the bucket assignment.
std::vector<double> oracle_embed(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ull;
    }
    v[h % dim] += 1.0;
    tok.clear();
  };
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      tok.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n > 0.0)
    for (double& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace

TEST_CASE("embed_text is deterministic and zero for empty input") {
  CHECK(embed_text("Big Win tonight", 64) == embed_text("Big Win tonight", 64));
  const auto z = embed_text("", 64);
  REQUIRE(z.size() == 64);
  for (double x : z) CHECK(x == 0.0);
  for (double x : embed_text(" ,.!? ", 16)) CHECK(x == 0.0);
}

TEST_CASE("embed_text matches an independent hashing oracle") {
  const std::vector<std::string> texts = {"hello world", "Hello, WORLD hello", "join the vip group now",
                                          "a1 b2 c3 a1", "caf\xc3\xa9 ok", "x"};
  for (std::size_t dim : {7u, 16u, 64u}) {
    for (const auto& t : texts) {
      const auto got = embed_text(t, dim);
      const auto want = oracle_embed(t, dim);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < dim; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("texts with disjoint tokens are orthogonal unless buckets collide") {
  const std::string a = "alpha beta gamma";
  const std::string b = "delta epsilon zeta";
  const std::size_t dim = 64;
  std::set<std::uint64_t> ba, bb;
  for (const auto& t : tokenize(a)) ba.insert(fnv1a64(t) % dim);
  for (const auto& t : tokenize(b)) bb.insert(fnv1a64(t) % dim);
  bool collide = false;
  for (auto x : ba) collide |= bb.count(x) > 0;
  const auto va = embed_text(a, dim), vb = embed_text(b, dim);
  double dot = 0.0;
  for (std::size_t i = 0; i < dim; ++i) dot += va[i] * vb[i];
  if (collide) {
    CHECK(dot > 0.0);
  } else {
    CHECK(dot == 0.0);
  }
}

TEST_CASE("generation is byte-identical for the same seed") {
  const auto cfg = small_config();
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  CHECK(serialize(a.sessions) == serialize(b.sessions));
  auto other = cfg;
  other.seed = 12;
  CHECK(serialize(generate_dataset(other).sessions) != serialize(a.sessions));
}

TEST_CASE("reference config yields 100 positives out of 1100") {
  SynthConfig cfg;
  CHECK(cfg.positive_count() == 100);
  const auto ds = generate_dataset(cfg);
  REQUIRE(ds.sessions.size() == 1100);
  std::size_t pos = 0;
  for (const auto& s : ds.sessions) pos += s.label.value() == 1;
  CHECK(pos == 100);
}

TEST_CASE("labels agree with planted truth and truth cells are well formed") {
  const auto cfg = small_config();
  const auto ds = generate_dataset(cfg);
  std::map<std::string, std::size_t> template_uses;
  for (const auto& s : ds.sessions) {
    REQUIRE(ds.truth.count(s.session_id) == 1);
    const auto& cells = ds.truth.at(s.session_id);
    CHECK((s.label.value() == 1) == !cells.empty());
    if (cells.empty()) continue;
    std::set<std::size_t> slots;
    std::set<std::string> templates;
    bool has_host = false, has_viewer = false;
    for (const auto& c : cells) {
      slots.insert(c.slot);
      templates.insert(c.template_id);
      CHECK(c.slot >= 1);
      CHECK(c.slot <= cfg.discretization.slot_count());
      (c.user_id == s.host_id ? has_host : has_viewer) = true;
      // The planted cell must contain at least one action by that user in that slot.
      bool found = false;
      for (const auto& a : s.actions)
        found |= a.user_id == c.user_id && slot_of(a.timestamp, cfg.discretization) == c.slot;
      CHECK(found);
    }
    CHECK(slots.size() == cells.size());
    CHECK(templates.size() == 1);
    CHECK(has_host);
    CHECK(has_viewer);
    ++template_uses[*templates.begin()];
  }
  // 20 positives over 6 templates: every template recurs.
  CHECK(template_uses.size() == cfg.n_templates);
  for (const auto& [id, n] : template_uses) CHECK(n >= 2);
}

TEST_CASE("infeasible configurations are rejected") {
  SynthConfig cfg = small_config();
  cfg.discretization.horizon = 300;
  cfg.discretization.slot_width = 100;  // 3 slots, fewer than the phase count
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
  cfg = small_config();
  cfg.positive_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.positive_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.min_actions = 50;
  cfg.max_actions = 40;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  ScamTemplate t;
  t.template_id = "x";
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("truth sidecar round-trips") {
  const auto ds = generate_dataset(small_config());
  const auto path = std::filesystem::temp_directory_path() / "csvar_truth_roundtrip.json";
  write_truth(path, ds.truth);
  const auto back = read_truth(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == ds.truth.size());
  for (const auto& [id, cells] : ds.truth) {
    const auto& other = back.at(id);
    REQUIRE(other.size() == cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      CHECK(other[i].user_id == cells[i].user_id);
      CHECK(other[i].slot == cells[i].slot);
      CHECK(other[i].phase == cells[i].phase);
      CHECK(other[i].template_id == cells[i].template_id);
      CHECK(other[i].category == cells[i].category);
    }
  }
}

TEST_CASE("split is stratified, disjoint and complete") {
  const auto ds = generate_dataset(small_config());
  const auto split = split_dataset(ds.sessions, 0.7, 0.15, 3);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    std::size_t pos = 0;
    for (const auto& s : *part) {
      ids.insert(s.session_id);
      pos += s.label.value();
    }
    CHECK(pos >= 1);
    total += part->size();
  }
  CHECK(total == ds.sessions.size());
  CHECK(ids.size() == ds.sessions.size());
}

TEST_CASE("risk keyword density") {
  CHECK(risk_keyword_density("") == 0.0);
  CHECK(risk_keyword_density("nice weather today") == 0.0);
  const auto& lex = phase_lexicon(Phase::kUrgency);
  REQUIRE(!lex.empty());
  CHECK(risk_keyword_density(lex.front()) == doctest::Approx(1.0));
}
