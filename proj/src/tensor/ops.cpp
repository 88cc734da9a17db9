#include "csvar/tensor/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "csvar/simd/kernels.hpp"

namespace csvar::ag {
namespace {

void add_colsum(const Matrix& g, Matrix& out) {
  for (std::size_t r = 0; r < g.rows(); ++r) simd::axpy(1.0, g.data() + r * g.cols(), out.data(), g.cols());
}

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix copy_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    std::copy_n(m.data() + r * m.cols() + begin, count, out.data() + r * count);
  return out;
}

void add_into_cols(const Matrix& src, Matrix& dst, std::size_t begin) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    simd::axpy(1.0, src.data() + r * src.cols(), dst.data() + r * dst.cols() + begin, src.cols());
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = csvar::matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) matmul_nt(g, tp.value(b), tp.grad(a), true);
    if (tp.needs_grad(b)) matmul_tn(tp.value(a), g, tp.grad(b), true);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(b);
  Matrix out = csvar::matmul(xv, t.value(w));
  assert(bv.rows() == 1 && bv.cols() == out.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) simd::axpy(1.0, bv.data(), out.data() + r * out.cols(), out.cols());
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(x)) matmul_nt(g, tp.value(w), tp.grad(x), true);
    if (tp.needs_grad(w)) matmul_tn(tp.value(x), g, tp.grad(w), true);
    if (tp.needs_grad(b)) add_colsum(g, tp.grad(b));
  });
}

Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a);
  if (!out.same_shape(t.value(b))) throw std::invalid_argument("add: shape mismatch");
  out += t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) tp.grad(a) += g;
    if (tp.needs_grad(b)) tp.grad(b) += g;
  });
}

Var scale(Tape& t, Var x, double factor) {
  Matrix out = t.value(x);
  simd::scale(factor, out.data(), out.size());
  return t.record(std::move(out), {x}, [x, factor](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    simd::axpy(factor, g.data(), tp.grad(x).data(), g.size());
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) tp.grad(a) += copy_cols(g, 0, ca);
    if (tp.needs_grad(b)) tp.grad(b) += copy_cols(g, ca, cb);
  });
}

Var gather_rows(Tape& t, Var x, std::vector<std::size_t> rows) {
  const Matrix& xv = t.value(x);
  const std::size_t c = xv.cols();
  Matrix out(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(xv.data() + rows[i] * c, c, out.data() + i * c);
  }
  return t.record(std::move(out), {x}, [x, rows = std::move(rows), c](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) simd::axpy(1.0, g.data() + i * c, gx.data() + rows[i] * c, c);
  });
}

Var prepend_row(Tape& t, Var row, Var x) {
  const Matrix& rv = t.value(row);
  const Matrix& xv = t.value(x);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) throw std::invalid_argument("prepend_row: shape mismatch");
  Matrix out(xv.rows() + 1, xv.cols());
  std::copy_n(rv.data(), rv.cols(), out.data());
  std::copy_n(xv.data(), xv.size(), out.data() + rv.cols());
  return t.record(std::move(out), {row, x}, [row, x](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const std::size_t c = g.cols();
    if (tp.needs_grad(row)) simd::axpy(1.0, g.data(), tp.grad(row).data(), c);
    if (tp.needs_grad(x)) {
      Matrix& gx = tp.grad(x);
      simd::axpy(1.0, g.data() + c, gx.data(), gx.size());
    }
  });
}

Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = t.value(x);
  if (begin + count > xv.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  const std::size_t c = xv.cols();
  Matrix out(count, c);
  std::copy_n(xv.data() + begin * c, count * c, out.data());
  return t.record(std::move(out), {x}, [x, begin, c](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    simd::axpy(1.0, g.data(), tp.grad(x).data() + begin * c, g.size());
  });
}

Var relu(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {x}, [x](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y.data()[i] > 0.0) gx.data()[i] += g.data()[i];
  });
}

Var sigmoid(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.storage()) v = sigmoid_scalar(v);
  return t.record(std::move(out), {x}, [x](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = y.data()[i];
      gx.data()[i] += g.data()[i] * s * (1.0 - s);
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gain);
  const Matrix& bv = t.value(bias);
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xr[c] - mu) * inv_std[r];
      out(r, c) = xhat(r, c) * gv(0, c) + bv(0, c);
    }
  }
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, Var self) {
                    const Matrix& g = tp.grad(self);
                    const Matrix& gv = tp.value(gain);
                    const std::size_t n = g.rows();
                    const std::size_t d = g.cols();
                    if (tp.needs_grad(gain) || tp.needs_grad(bias)) {
                      Matrix& gg = tp.grad(gain);
                      Matrix& gb = tp.grad(bias);
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) {
                          gg(0, c) += g(r, c) * xhat(r, c);
                          gb(0, c) += g(r, c);
                        }
                    }
                    if (!tp.needs_grad(x)) return;
                    Matrix& gx = tp.grad(x);
                    std::vector<double> dxhat(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t c = 0; c < d; ++c) {
                        dxhat[c] = g(r, c) * gv(0, c);
                        mean_d += dxhat[c];
                        mean_dx += dxhat[c] * xhat(r, c);
                      }
                      mean_d /= static_cast<double>(d);
                      mean_dx /= static_cast<double>(d);
                      for (std::size_t c = 0; c < d; ++c)
                        gx(r, c) += inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
                    }
                  });
}

Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Matrix& xv = t.value(x);
  Matrix mask(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  Matrix out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask.data()[i] = keep(rng) ? inv : 0.0;
    out.data()[i] *= mask.data()[i];
  }
  return t.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += g.data()[i] * mask.data()[i];
  });
}

Var multi_head_attention(Tape& t, Var x, const AttentionWeights& w, Var bias, std::size_t n_heads,
                         std::vector<Matrix>* probs_out) {
  const Matrix& xv = t.value(x);
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (n_heads == 0 || d % n_heads != 0) throw std::invalid_argument("attention: d not divisible by heads");
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix* bv = bias.valid() ? &t.value(bias) : nullptr;
  if (bv != nullptr && (bv->rows() != n || bv->cols() != n)) throw std::invalid_argument("attention: bias shape");

  auto project = [&](Var wm, Var bm) {
    Matrix out = csvar::matmul(xv, t.value(wm));
    const Matrix& b = t.value(bm);
    for (std::size_t r = 0; r < n; ++r) simd::axpy(1.0, b.data(), out.data() + r * d, d);
    return out;
  };
  Matrix q = project(w.wq, w.bq);
  Matrix k = project(w.wk, w.bk);
  Matrix v = project(w.wv, w.bv);

  std::vector<Matrix> probs(n_heads);
  Matrix concat(n, d);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Matrix qh = copy_cols(q, h * dh, dh);
    const Matrix kh = copy_cols(k, h * dh, dh);
    const Matrix vh = copy_cols(v, h * dh, dh);
    Matrix s = csvar::matmul_nt(qh, kh);
    if (bv != nullptr) s += *bv;
    simd::scale(inv_sqrt, s.data(), s.size());
    softmax_rows(s);
    const Matrix oh = csvar::matmul(s, vh);
    add_into_cols(oh, concat, h * dh);
    probs[h] = std::move(s);
  }
  Matrix out = csvar::matmul(concat, t.value(w.wo));
  const Matrix& bo = t.value(w.bo);
  for (std::size_t r = 0; r < n; ++r) simd::axpy(1.0, bo.data(), out.data() + r * d, d);
  if (probs_out != nullptr) *probs_out = probs;

  return t.record(
      std::move(out), {x, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo, bias},
      [x, w, bias, n_heads, dh, inv_sqrt, q = std::move(q), k = std::move(k), v = std::move(v),
       probs = std::move(probs), concat = std::move(concat)](Tape& tp, Var self) {
        const Matrix& g = tp.grad(self);
        const std::size_t n = g.rows();
        const std::size_t d = g.cols();
        if (tp.needs_grad(w.wo)) matmul_tn(concat, g, tp.grad(w.wo), true);
        if (tp.needs_grad(w.bo)) add_colsum(g, tp.grad(w.bo));
        Matrix dconcat = csvar::matmul_nt(g, tp.value(w.wo));

        Matrix dq(n, d), dk(n, d), dv(n, d);
        Matrix dbias;
        const bool want_bias = bias.valid() && tp.needs_grad(bias);
        if (want_bias) dbias.resize(n, n);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const Matrix& p = probs[h];
          const Matrix doh = copy_cols(dconcat, h * dh, dh);
          const Matrix qh = copy_cols(q, h * dh, dh);
          const Matrix kh = copy_cols(k, h * dh, dh);
          const Matrix vh = copy_cols(v, h * dh, dh);
          Matrix dp = csvar::matmul_nt(doh, vh);
          Matrix dvh;
          matmul_tn(p, doh, dvh);
          // dS = P o (dP - rowsum(dP o P)), then the 1/sqrt(dh) scale.
          for (std::size_t r = 0; r < n; ++r) {
            const double inner = simd::dot(dp.data() + r * n, p.data() + r * n, n);
            for (std::size_t c = 0; c < n; ++c) dp(r, c) = p(r, c) * (dp(r, c) - inner) * inv_sqrt;
          }
          if (want_bias) dbias += dp;
          const Matrix dqh = csvar::matmul(dp, kh);
          Matrix dkh;
          matmul_tn(dp, qh, dkh);
          add_into_cols(dqh, dq, h * dh);
          add_into_cols(dkh, dk, h * dh);
          add_into_cols(dvh, dv, h * dh);
        }
        if (want_bias) tp.grad(bias) += dbias;

        const Matrix& xv = tp.value(x);
        auto back_proj = [&](const Matrix& dproj, Var wm, Var bm) {
          if (tp.needs_grad(wm)) matmul_tn(xv, dproj, tp.grad(wm), true);
          if (tp.needs_grad(bm)) add_colsum(dproj, tp.grad(bm));
          if (tp.needs_grad(x)) matmul_nt(dproj, tp.value(wm), tp.grad(x), true);
        };
        back_proj(dq, w.wq, w.bq);
        back_proj(dk, w.wk, w.bk);
        back_proj(dv, w.wv, w.bv);
      });
}

Var lstm_layer(Tape& t, Var x, std::vector<std::size_t> offsets, Var w_ih, Var w_hh, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& whh = t.value(w_hh);
  const std::size_t m = xv.rows();
  const std::size_t hd = whh.rows();
  const std::size_t g4 = 4 * hd;
  if (whh.cols() != g4 || t.value(w_ih).cols() != g4) throw std::invalid_argument("lstm: weight shapes");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != m)
    throw std::invalid_argument("lstm: offsets must span the packed rows");

  // Pre-activations from the input, then recurrence per sequence.
  Matrix gates = csvar::matmul(xv, t.value(w_ih));
  const Matrix& bv = t.value(b);
  for (std::size_t r = 0; r < m; ++r) simd::axpy(1.0, bv.data(), gates.data() + r * g4, g4);

  Matrix hidden(m, hd);
  Matrix cell(m, hd);
  const auto& kt = simd::active();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      double* gr = gates.data() + r * g4;
      if (r > offsets[s]) {
        const double* hp = hidden.data() + (r - 1) * hd;
        for (std::size_t j = 0; j < hd; ++j)
          if (hp[j] != 0.0) kt.axpy(hp[j], whh.data() + j * g4, gr, g4);
      }
      for (std::size_t j = 0; j < hd; ++j) {
        const double ig = sigmoid_scalar(gr[j]);
        const double fg = sigmoid_scalar(gr[hd + j]);
        const double gg = std::tanh(gr[2 * hd + j]);
        const double og = sigmoid_scalar(gr[3 * hd + j]);
        gr[j] = ig;
        gr[hd + j] = fg;
        gr[2 * hd + j] = gg;
        gr[3 * hd + j] = og;
        const double cprev = r > offsets[s] ? cell(r - 1, j) : 0.0;
        cell(r, j) = fg * cprev + ig * gg;
        hidden(r, j) = og * std::tanh(cell(r, j));
      }
    }
  }
  Matrix out = hidden;
  return t.record(
      std::move(out), {x, w_ih, w_hh, b},
      [x, w_ih, w_hh, b, offsets = std::move(offsets), gates = std::move(gates), cell = std::move(cell), hd,
       g4](Tape& tp, Var self) {
        const Matrix& dh_out = tp.grad(self);
        const Matrix& hidden = tp.value(self);
        const Matrix& whh = tp.value(w_hh);
        const std::size_t m = hidden.rows();
        Matrix dgates(m, g4);
        const bool want_whh = tp.needs_grad(w_hh);
        Matrix* gwhh = want_whh ? &tp.grad(w_hh) : nullptr;
        const auto& kt = simd::active();
        std::vector<double> dh(hd), dc(hd), dh_next(hd), dc_next(hd);
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          std::fill(dc_next.begin(), dc_next.end(), 0.0);
          for (std::size_t r = offsets[s + 1]; r-- > offsets[s];) {
            const double* gr = gates.data() + r * g4;
            double* dg = dgates.data() + r * g4;
            const bool first = r == offsets[s];
            for (std::size_t j = 0; j < hd; ++j) {
              const double ig = gr[j], fg = gr[hd + j], gg = gr[2 * hd + j], og = gr[3 * hd + j];
              const double c = cell(r, j);
              const double tc = std::tanh(c);
              const double dhj = dh_out(r, j) + dh_next[j];
              const double dcj = dc_next[j] + dhj * og * (1.0 - tc * tc);
              const double cprev = first ? 0.0 : cell(r - 1, j);
              dg[j] = dcj * gg * ig * (1.0 - ig);
              dg[hd + j] = dcj * cprev * fg * (1.0 - fg);
              dg[2 * hd + j] = dcj * ig * (1.0 - gg * gg);
              dg[3 * hd + j] = dhj * tc * og * (1.0 - og);
              dc[j] = dcj * fg;
            }
            if (!first) {
              const double* hp = hidden.data() + (r - 1) * hd;
              for (std::size_t j = 0; j < hd; ++j) {
                dh_next[j] = kt.dot(whh.data() + j * g4, dg, g4);
                if (want_whh && hp[j] != 0.0) kt.axpy(hp[j], dg, gwhh->data() + j * g4, g4);
              }
              dc_next = dc;
            }
          }
        }
        if (tp.needs_grad(b)) add_colsum(dgates, tp.grad(b));
        if (tp.needs_grad(w_ih)) matmul_tn(tp.value(x), dgates, tp.grad(w_ih), true);
        if (tp.needs_grad(x)) matmul_nt(dgates, tp.value(w_ih), tp.grad(x), true);
      });
}

Var bce_with_logits_sum(Tape& t, Var logits, std::vector<double> labels) {
  const Matrix& z = t.value(logits);
  if (z.size() != labels.size()) throw std::invalid_argument("bce: label count mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z.data()[i];
    loss += std::max(zi, 0.0) - zi * labels[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  return t.record(Matrix(1, 1, loss), {logits}, [logits, labels = std::move(labels)](Tape& tp, Var self) {
    const double g = tp.grad(self)(0, 0);
    const Matrix& z = tp.value(logits);
    Matrix& gz = tp.grad(logits);
    for (std::size_t i = 0; i < z.size(); ++i) gz.data()[i] += g * (sigmoid_scalar(z.data()[i]) - labels[i]);
  });
}

Var mean_squared_error(Tape& t, Var x, Matrix target) {
  const Matrix& xv = t.value(x);
  if (!xv.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv.data()[i] - target.data()[i];
    acc += d * d;
  }
  const double n = static_cast<double>(xv.size());
  return t.record(Matrix(1, 1, acc / n), {x}, [x, target = std::move(target), n](Tape& tp, Var self) {
    const double g = tp.grad(self)(0, 0);
    const Matrix& xv = tp.value(x);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx.data()[i] += g * 2.0 * (xv.data()[i] - target.data()[i]) / n;
  });
}

Var weighted_sum(Tape& t, Var x, std::vector<double> weights) {
  const Matrix& xv = t.value(x);
  if (xv.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += weights[i] * xv.data()[i];
  return t.record(Matrix(1, 1, acc), {x}, [x, weights = std::move(weights)](Tape& tp, Var self) {
    const double g = tp.grad(self)(0, 0);
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < weights.size(); ++i) gx.data()[i] += g * weights[i];
  });
}

}  // namespace csvar::ag
