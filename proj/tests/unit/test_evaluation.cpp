#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "csvar/core/error.hpp"
#include "csvar/eval/heatmap.hpp"
#include "csvar/eval/metrics.hpp"
#include "doctest.h"
#include "session_fixtures.hpp"

using namespace csvar;
using namespace csvar::eval;

namespace {

ScoredSet make(std::vector<double> scores, std::vector<int> labels) {
  ScoredSet s;
  for (std::size_t i = 0; i < scores.size(); ++i) s.add("s" + std::to_string(i), scores[i], labels[i]);
  return s;
}

// Independent oracle: for every candidate threshold (each score value, plus one
// above the maximum) count the confusion matrix directly.
struct Point {
  double tp, fp, fn, tn;
};

std::vector<std::pair<double, Point>> enumerate(const ScoredSet& s) {
  std::set<double, std::greater<>> thresholds(s.scores.begin(), s.scores.end());
  std::vector<std::pair<double, Point>> out;
  for (double t : thresholds) {
    Point p{0, 0, 0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool pred = s.scores[i] >= t;
      if (s.labels[i] == 1) (pred ? p.tp : p.fn) += 1;
      else (pred ? p.fp : p.tn) += 1;
    }
    out.emplace_back(t, p);
  }
  return out;
}

double oracle_pr_auc(const ScoredSet& s) {
  double area = 0.0, prev = 0.0;
  for (const auto& [t, p] : enumerate(s)) {
    const double r = p.tp / (p.tp + p.fn);
    area += (r - prev) * (p.tp / (p.tp + p.fp));
    prev = r;
  }
  return area;
}

double oracle_f1(const ScoredSet& s) {
  double best = 0.0;
  for (const auto& [t, p] : enumerate(s)) best = std::max(best, 2 * p.tp / (2 * p.tp + p.fp + p.fn));
  return best;
}

double oracle_recall_at_fpr(const ScoredSet& s, double cap) {
  double best = 0.0;
  for (const auto& [t, p] : enumerate(s))
    if (p.fp / (p.fp + p.tn) <= cap) best = std::max(best, p.tp / (p.tp + p.fn));
  return best;
}

double oracle_fpr_at_recall(const ScoredSet& s, double floor) {
  double best = 1.0;
  for (const auto& [t, p] : enumerate(s))
    if (p.tp / (p.tp + p.fn) >= floor) best = std::min(best, p.fp / (p.fp + p.tn));
  return best;
}

ScoredSet random_set(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 100), coarse(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = size(rng);
  const bool ties = u(rng) < 0.5;
  ScoredSet s;
  for (int i = 0; i < n; ++i)
    s.add("s" + std::to_string(i), ties ? coarse(rng) / 10.0 : u(rng), u(rng) < 0.3 ? 1 : 0);
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("metric examples") {
  const auto perfect = make({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0});
  CHECK(pr_auc(perfect) == 1.0);
  CHECK(f1_best(perfect) == 1.0);
  CHECK(recall_at_fpr(perfect) == 1.0);
  CHECK(recall_at_fpr(perfect, 0.0) == 1.0);
  CHECK(fpr_at_recall(perfect) == 0.0);

  // thresholds 0.9: P=1 R=.5; 0.8: P=.5; 0.3: P=2/3 R=1; 0.1: P=.5
  const auto mixed = make({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0});
  CHECK(pr_auc(mixed) == doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)));
  CHECK(pr_auc(mixed) == oracle_pr_auc(mixed));

  const auto flat = make({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 0, 1, 0});
  CHECK(pr_auc(flat) == doctest::Approx(0.4));

  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    scores.push_back(1.0 - i / 10.0);
    labels.push_back(i == 9 ? 1 : 0);
  }
  const auto lowest = make(scores, labels);
  CHECK(f1_best(lowest) == doctest::Approx(2.0 / 11.0));
  CHECK(f1_best(lowest) == oracle_f1(lowest));

  CHECK(f1_best(make({0.2, 0.7, 0.5}, {1, 1, 1})) == 1.0);
  CHECK(fpr_at_recall(mixed, 1.0) == 0.5);
}

TEST_CASE("metric error cases") {
  CHECK_THROWS_AS(pr_auc(make({0.1, 0.2}, {0, 0})), MetricError);
  CHECK_THROWS_AS(f1_best(make({0.1, 0.2}, {0, 0})), MetricError);
  CHECK_THROWS_AS(recall_at_fpr(make({0.1, 0.2}, {1, 1})), MetricError);
  CHECK_THROWS_AS(fpr_at_recall(make({0.1, 0.2}, {0, 0})), MetricError);
  ScoredSet bad = make({0.1, 0.2}, {0, 1});
  bad.labels.push_back(1);
  CHECK_THROWS_AS(pr_auc(bad), ValidationError);
  CHECK_THROWS_AS(pr_auc(make({0.1, 0.2}, {0, 2})), ValidationError);
}

TEST_CASE("metrics equal exhaustive threshold enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng);
    CHECK(pr_auc(s) == oracle_pr_auc(s));
    CHECK(f1_best(s) == oracle_f1(s));
    CHECK(recall_at_fpr(s) == oracle_recall_at_fpr(s, 0.1));
    CHECK(fpr_at_recall(s) == oracle_fpr_at_recall(s, 0.9));
  }
}

TEST_CASE("adding a top-ranked positive never lowers PR-AUC") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_set(rng);
    const double before = pr_auc(s);
    s.add("extra", *std::max_element(s.scores.begin(), s.scores.end()) + 1.0, 1);
    CHECK(pr_auc(s) >= before);
  }
}

TEST_CASE("heatmap structure and JSON round trip") {
  using testing::act;
  auto s = testing::prepare({act("host", 10, ActionType::kComment, "hi"), act("v1", 150, ActionType::kComment, "a"),
                             act("v2", 250, ActionType::kLike, ""), act("host", 260, ActionType::kComment, "b")},
                            6);
  std::vector<double> scores;
  for (std::size_t k = 0; k < s.patches.size(); ++k) scores.push_back(0.1 + 0.123456789 * static_cast<double>(k));
  const auto grid = make_heatmap(s, scores, 3);
  CHECK(grid.users.front() == "host");
  CHECK(grid.cells.size() == s.patches.size());
  CHECK(grid.users.size() == 3);
  CHECK(grid.find("v1", 1) == nullptr);
  REQUIRE(grid.find("v1", 2) != nullptr);
  CHECK(grid.max_cell()->score == *std::max_element(scores.begin(), scores.end()));

  const auto base = std::filesystem::temp_directory_path() / "csvar_heatmap_test" / "grid";
  emit_heatmap(grid, base);
  const auto back = read_heatmap_json(base.string() + ".json");
  CHECK(back.users == grid.users);
  CHECK(back.slot_count == 3);
  REQUIRE(back.cells.size() == grid.cells.size());
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    CHECK(back.cells[i].user_id == grid.cells[i].user_id);
    CHECK(back.cells[i].slot == grid.cells[i].slot);
    CHECK(back.cells[i].score == grid.cells[i].score);
  }
  CHECK(std::filesystem::file_size(base.string() + ".svg") > 0);

  const auto zeros = make_heatmap(s, std::vector<double>(s.patches.size(), 0.0), 3);
  emit_heatmap(zeros, base);
  std::ifstream svg(base.string() + ".svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), {});
  CHECK(text.find("#ffffff") != std::string::npos);
  CHECK(text.find("#ff0") == std::string::npos);
  std::filesystem::remove_all(base.parent_path());

  CHECK_THROWS_AS(make_heatmap(s, {0.5}, 3), ValidationError);
}
