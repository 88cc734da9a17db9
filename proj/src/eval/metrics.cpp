#include "csvar/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csvar/core/error.hpp"

namespace csvar::eval {
namespace {

// One entry per distinct score, descending: cumulative TP and FP counts.
struct Step {
  std::size_t tp = 0;
  std::size_t fp = 0;
};

std::vector<Step> sweep(const ScoredSet& s) {
  s.validate();
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  std::vector<Step> steps;
  Step cur;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (s.labels[order[i]] == 1 ? cur.tp : cur.fp)++;
    if (i + 1 == order.size() || s.scores[order[i + 1]] != s.scores[order[i]]) steps.push_back(cur);
  }
  return steps;
}

void need_positive(const ScoredSet& s) {
  s.validate();
  if (s.positives() == 0) throw MetricError("metric undefined without positive labels");
}

void need_both(const ScoredSet& s) {
  need_positive(s);
  if (s.positives() == s.size()) throw MetricError("metric undefined without negative labels");
}

}  // namespace

void ScoredSet::add(std::string id, double score, int label) {
  session_ids.push_back(std::move(id));
  scores.push_back(score);
  labels.push_back(label);
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void ScoredSet::validate() const {
  if (scores.size() != labels.size() || (!session_ids.empty() && session_ids.size() != scores.size()))
    throw ValidationError("scored set lists differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1");
  for (double v : scores)
    if (!std::isfinite(v)) throw ValidationError("scores must be finite");
}

double pr_auc(const ScoredSet& s) {
  need_positive(s);
  const auto steps = sweep(s);
  const double p = static_cast<double>(s.positives());
  double area = 0.0, prev_recall = 0.0;
  for (const auto& st : steps) {
    const double recall = static_cast<double>(st.tp) / p;
    const double precision = static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double f1_best(const ScoredSet& s) {
  need_positive(s);
  const double p = static_cast<double>(s.positives());
  double best = 0.0;
  for (const auto& st : sweep(s)) {
    const double fn = p - static_cast<double>(st.tp);
    best = std::max(best, 2.0 * static_cast<double>(st.tp) / (2.0 * static_cast<double>(st.tp) + static_cast<double>(st.fp) + fn));
  }
  return best;
}

double recall_at_fpr(const ScoredSet& s, double fpr_cap) {
  need_both(s);
  const double p = static_cast<double>(s.positives());
  const double n = static_cast<double>(s.size()) - p;
  double best = 0.0;
  for (const auto& st : sweep(s))
    if (static_cast<double>(st.fp) / n <= fpr_cap) best = std::max(best, static_cast<double>(st.tp) / p);
  return best;
}

double fpr_at_recall(const ScoredSet& s, double recall_floor) {
  need_both(s);
  const double p = static_cast<double>(s.positives());
  const double n = static_cast<double>(s.size()) - p;
  double best = 1.0;
  for (const auto& st : sweep(s))
    if (static_cast<double>(st.tp) / p >= recall_floor) best = std::min(best, static_cast<double>(st.fp) / n);
  return best;
}

MetricReport evaluate(const ScoredSet& s) {
  return {pr_auc(s), f1_best(s), recall_at_fpr(s), fpr_at_recall(s)};
}

}  // namespace csvar::eval
