#include "csvar/distill/losses.hpp"

#include <cmath>

#include "csvar/core/error.hpp"
#include "csvar/tensor/ops.hpp"

namespace csvar::distill {
namespace {

std::vector<double> normalized(std::span<const double> saliency) {
  double sum = 0.0;
  for (double s : saliency) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("saliency must be finite and non-negative");
    sum += s;
  }
  if (!(sum > 0.0)) throw ValidationError("saliency sums to zero");
  std::vector<double> w;
  w.reserve(saliency.size());
  for (double s : saliency) w.push_back(s / sum);
  return w;
}

}  // namespace

void LossWeights::validate() const {
  if (!(beta >= 0.0) || !(gamma >= 0.0) || !std::isfinite(beta) || !std::isfinite(gamma))
    throw ConfigError("loss weights must be finite and non-negative");
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  return parts.session + w.beta * parts.patch + w.gamma * parts.patch_to_session;
}

double session_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw ValidationError("session loss: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    sum += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return sum;
}

double patch_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw ValidationError("patch loss needs one prediction per teacher patch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += (predictions[i] - targets[i]) * (predictions[i] - targets[i]);
  return sum / static_cast<double>(predictions.size());
}

double saliency_aggregate(std::span<const double> predictions, std::span<const double> saliency) {
  if (predictions.size() != saliency.size() || predictions.empty())
    throw ValidationError("saliency aggregate: size mismatch");
  const auto w = normalized(saliency);
  double agg = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) agg += w[i] * predictions[i];
  return agg;
}

double patch_to_session_loss(std::span<const double> predictions, std::span<const double> saliency,
                             double teacher_session) {
  const double d = saliency_aggregate(predictions, saliency) - teacher_session;
  return d * d;
}

ag::Var patch_loss(ag::Tape& t, ag::Var predictions, std::vector<double> targets) {
  const auto& p = t.value(predictions);
  if (p.rows() != targets.size() || targets.empty() || p.cols() != 1)
    throw ValidationError("patch loss needs one prediction per teacher patch");
  Matrix target(targets.size(), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) target(i, 0) = targets[i];
  return ag::mean_squared_error(t, predictions, std::move(target));
}

ag::Var patch_to_session_loss(ag::Tape& t, ag::Var predictions, std::span<const double> saliency,
                              double teacher_session) {
  if (t.value(predictions).rows() != saliency.size()) throw ValidationError("saliency aggregate: size mismatch");
  const ag::Var agg = ag::weighted_sum(t, predictions, normalized(saliency));
  Matrix target(1, 1);
  target(0, 0) = teacher_session;
  return ag::mean_squared_error(t, agg, std::move(target));
}

}  // namespace csvar::distill
