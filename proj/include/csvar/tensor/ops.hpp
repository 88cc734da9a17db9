#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "csvar/tensor/autograd.hpp"

namespace csvar::ag {

Var matmul(Tape& t, Var a, Var b);
// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double factor);
Var concat_cols(Tape& t, Var a, Var b);
Var gather_rows(Tape& t, Var x, std::vector<std::size_t> rows);
// [row ; x]
Var prepend_row(Tape& t, Var row, Var x);
Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count);
Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
// Inverted dropout; identity when rate == 0.
Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng);

struct AttentionWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

// Multi-head self-attention Softmax((Q K^T + bias) / sqrt(d_head)) V followed
// by the output projection. `bias` may be invalid (plain attention). When
// `probs_out` is non-null it receives one n x n probability matrix per head.
Var multi_head_attention(Tape& t, Var x, const AttentionWeights& w, Var bias,
                         std::size_t n_heads, std::vector<Matrix>* probs_out = nullptr);

// Single LSTM layer (gate order i, f, g, o) over packed variable-length
// sequences: sequence s occupies rows [offsets[s], offsets[s+1]) of x.
// Zero initial state. Returns the hidden state for every packed row.
Var lstm_layer(Tape& t, Var x, std::vector<std::size_t> offsets, Var w_ih, Var w_hh, Var b);

// Sum over rows of binary cross-entropy computed from logits (n x 1).
Var bce_with_logits_sum(Tape& t, Var logits, std::vector<double> labels);
// mean((x - target)^2) over all entries.
Var mean_squared_error(Tape& t, Var x, Matrix target);
// sum_i weights[i] * x[i] for an n x 1 input.
Var weighted_sum(Tape& t, Var x, std::vector<double> weights);

}  // namespace csvar::ag
