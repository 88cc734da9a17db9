#include <cmath>
#include <random>

#include "csvar/tensor/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace csvar;
using csvar::testing::gradient_check;
using csvar::testing::random_matrix;

TEST_CASE("linear, concat, gather, layer norm and relu backprop match finite differences") {
  std::mt19937_64 rng(1);
  ag::ParameterSet ps;
  ps.add("x", random_matrix(4, 3, rng));
  ps.add("w", random_matrix(3, 5, rng));
  ps.add("b", random_matrix(1, 5, rng));
  ps.add("y", random_matrix(4, 2, rng));
  ps.add("g", random_matrix(1, 7, rng));
  ps.add("beta", random_matrix(1, 7, rng));
  auto loss = [](ag::Tape& t, const ag::ParameterSet& p) {
    auto lin = ag::linear(t, t.param(p.get("x")), t.param(p.get("w")), t.param(p.get("b")));
    auto cat = ag::concat_cols(t, lin, t.param(p.get("y")));
    auto ln = ag::layer_norm(t, cat, t.param(p.get("g")), t.param(p.get("beta")));
    auto picked = ag::gather_rows(t, ag::relu(t, ln), {3, 0, 3});
    auto target = Matrix(3, 7, 0.25);
    return ag::mean_squared_error(t, picked, target);
  };
  CHECK(gradient_check(ps, loss) < 1e-5);
}

TEST_CASE("attention with additive bias backprop matches finite differences") {
  std::mt19937_64 rng(2);
  ag::ParameterSet ps;
  const std::size_t d = 8, n = 5;
  ps.add("x", random_matrix(n, d, rng));
  for (const char* name : {"wq", "wk", "wv", "wo"}) ps.add(name, random_matrix(d, d, rng, 0.4));
  for (const char* name : {"bq", "bk", "bv", "bo"}) ps.add(name, random_matrix(1, d, rng, 0.1));
  ps.add("bias", random_matrix(n, n, rng));
  auto loss = [](ag::Tape& t, const ag::ParameterSet& p) {
    ag::AttentionWeights w{t.param(p.get("wq")), t.param(p.get("bq")), t.param(p.get("wk")),
                           t.param(p.get("bk")), t.param(p.get("wv")), t.param(p.get("bv")),
                           t.param(p.get("wo")), t.param(p.get("bo"))};
    auto out = ag::multi_head_attention(t, t.param(p.get("x")), w, t.param(p.get("bias")), 2);
    return ag::mean_squared_error(t, ag::sigmoid(t, out), Matrix(5, 8, 0.3));
  };
  CHECK(gradient_check(ps, loss) < 1e-5);
}

TEST_CASE("attention probabilities are row-stochastic and invariant to a per-row bias shift") {
  std::mt19937_64 rng(3);
  const std::size_t d = 8, n = 4;
  ag::Tape t;
  auto mk = [&](std::size_t r, std::size_t c) { return t.constant(random_matrix(r, c, rng, 0.5)); };
  auto x = mk(n, d);
  ag::AttentionWeights w{mk(d, d), mk(1, d), mk(d, d), mk(1, d), mk(d, d), mk(1, d), mk(d, d), mk(1, d)};
  std::vector<Matrix> probs;
  auto plain = ag::multi_head_attention(t, x, w, ag::Var{}, 4, &probs);
  for (const auto& p : probs)
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (double v : p.row(r)) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  Matrix shift(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) shift(r, c) = static_cast<double>(r) * 0.7;
  auto shifted = ag::multi_head_attention(t, x, w, t.constant(shift), 4);
  CHECK(max_abs_diff(t.value(plain), t.value(shifted)) < 1e-12);
}

TEST_CASE("packed LSTM backprop matches finite differences across ragged sequences") {
  std::mt19937_64 rng(4);
  ag::ParameterSet ps;
  const std::size_t din = 3, hd = 4;
  ps.add("x", random_matrix(6, din, rng));
  ps.add("w_ih", random_matrix(din, 4 * hd, rng, 0.5));
  ps.add("w_hh", random_matrix(hd, 4 * hd, rng, 0.5));
  ps.add("b", random_matrix(1, 4 * hd, rng, 0.1));
  auto loss = [](ag::Tape& t, const ag::ParameterSet& p) {
    auto h = ag::lstm_layer(t, t.param(p.get("x")), {0, 1, 4, 6}, t.param(p.get("w_ih")),
                            t.param(p.get("w_hh")), t.param(p.get("b")));
    auto last = ag::gather_rows(t, h, {0, 3, 5});
    return ag::mean_squared_error(t, last, Matrix(3, 4, 0.2));
  };
  CHECK(gradient_check(ps, loss) < 1e-5);
}

TEST_CASE("LSTM single step from the zero state") {
  ag::Tape t;
  Matrix x{{0.5, -1.0}};
  Matrix w_ih(2, 4, 0.1);
  Matrix w_hh(1, 4, 0.9);
  Matrix b(1, 4, 0.0);
  auto h = ag::lstm_layer(t, t.constant(x), {0, 1}, t.constant(w_ih), t.constant(w_hh), t.constant(b));
  const double pre = 0.1 * 0.5 - 0.1;
  const double s = 1.0 / (1.0 + std::exp(-pre));
  const double c = s * std::tanh(pre);
  CHECK(t.value(h)(0, 0) == doctest::Approx(s * std::tanh(c)).epsilon(1e-14));
}

TEST_CASE("BCE with logits, weighted sum, scale, prepend and slice backprop") {
  std::mt19937_64 rng(5);
  ag::ParameterSet ps;
  ps.add("z", random_matrix(4, 1, rng, 3.0));
  ps.add("cls", random_matrix(1, 1, rng));
  auto loss = [](ag::Tape& t, const ag::ParameterSet& p) {
    auto all = ag::prepend_row(t, t.param(p.get("cls")), t.param(p.get("z")));
    auto bce = ag::bce_with_logits_sum(t, all, {1, 0, 1, 1, 0});
    auto tail = ag::slice_rows(t, all, 1, 3);
    auto ws = ag::weighted_sum(t, ag::sigmoid(t, tail), {0.2, 0.5, 0.3});
    return ag::add(t, ag::scale(t, bce, 0.5), ag::mean_squared_error(t, ws, Matrix(1, 1, 0.9)));
  };
  CHECK(gradient_check(ps, loss) < 1e-5);
}

TEST_CASE("BCE of a zero logit is ln 2 and stays finite for extreme logits") {
  ag::Tape t;
  auto z = t.constant(Matrix{{0.0}, {800.0}, {-800.0}});
  const double v = t.value(ag::bce_with_logits_sum(t, z, {1, 1, 0}))(0, 0);
  CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("dropout is identity at rate zero and rescales kept units") {
  std::mt19937_64 rng(6);
  ag::Tape t;
  auto x = t.constant(Matrix(10, 10, 1.0));
  CHECK(ag::dropout(t, x, 0.0, rng).id == x.id);
  auto y = ag::dropout(t, x, 0.5, rng);
  for (double v : t.value(y).storage()) CHECK((v == 0.0 || v == 2.0));
}
