#pragma once

#include <span>
#include <string>
#include <vector>

namespace csvar::eval {

struct ScoredSet {
  std::vector<std::string> session_ids;
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  void add(std::string id, double score, int label);
  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  // Throws ValidationError on length mismatch, labels outside {0, 1} or
  // non-finite scores.
  void validate() const;
};

// Thresholds are the distinct score values; a threshold t predicts positive
// for every score >= t, so tied scores enter together.

// Step-wise sum over thresholds in descending order: sum (R_i - R_{i-1}) P_i.
// Throws MetricError without positives.
double pr_auc(const ScoredSet& s);
// Best F1 over all thresholds. Throws MetricError without positives.
double f1_best(const ScoredSet& s);
// Largest recall among thresholds with FPR <= fpr_cap (0 if none). Throws
// MetricError unless both classes are present.
double recall_at_fpr(const ScoredSet& s, double fpr_cap = 0.1);
// Smallest FPR among thresholds with recall >= recall_floor.
double fpr_at_recall(const ScoredSet& s, double recall_floor = 0.9);

struct MetricReport {
  double pr_auc = 0.0;
  double f1 = 0.0;
  double recall_at_fpr = 0.0;
  double fpr_at_recall = 0.0;
};

MetricReport evaluate(const ScoredSet& s);

}  // namespace csvar::eval
