#pragma once

#include <span>
#include <string>
#include <vector>

#include "csvar/tensor/autograd.hpp"

namespace csvar::distill {

struct LossWeights {
  double beta = 1.0;   // patch loss
  double gamma = 1.0;  // patch-to-session loss

  void validate() const;  // ConfigError on negative or non-finite weights
};

struct LossParts {
  double session = 0.0;
  double patch = 0.0;
  double patch_to_session = 0.0;
};

// L = L_s + beta L_p + gamma L_p2s
double total_loss(const LossParts& parts, const LossWeights& w);

// Plain-value forms. Session loss is the stable logit form of
// -sum [y log s + (1 - y) log(1 - s)].
double session_loss(std::span<const double> logits, std::span<const int> labels);
// mean_k (p_k - t_k)^2; ValidationError on size mismatch or empty input.
double patch_loss(std::span<const double> predictions, std::span<const double> targets);
// sum_k (SAL_k / sum_j SAL_j) p_k. ValidationError if the saliencies do not
// have a positive sum.
double saliency_aggregate(std::span<const double> predictions, std::span<const double> saliency);
double patch_to_session_loss(std::span<const double> predictions, std::span<const double> saliency,
                             double teacher_session);

// Taped forms over an n x 1 column of patch probabilities.
ag::Var patch_loss(ag::Tape& t, ag::Var predictions, std::vector<double> targets);
ag::Var patch_to_session_loss(ag::Tape& t, ag::Var predictions, std::span<const double> saliency,
                              double teacher_session);

}  // namespace csvar::distill
