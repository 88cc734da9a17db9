#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "csvar/tensor/autograd.hpp"

namespace csvar::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.storage()) v = dist(rng);
  return m;
}

using LossFn = std::function<ag::Var(ag::Tape&, const ag::ParameterSet&)>;

// Largest relative error between analytic gradients and central differences
// over every scalar of every parameter. Relative error uses
// |a - n| / max(|a| + |n|, floor).
inline double gradient_check(ag::ParameterSet& params, const LossFn& loss, double h = 1e-6,
                             double floor = 1e-6) {
  ag::GradBuffer grads(params);
  {
    ag::Tape tape(&grads);
    tape.backward(loss(tape, params));
  }
  auto eval = [&] {
    ag::Tape tape;
    return tape.value(loss(tape, params))(0, 0);
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params[p].value.storage();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = eval();
      values[i] = orig - h;
      const double down = eval();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[p].storage()[i];
      const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace csvar::testing
