#include "csvar/patchnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csvar/core/error.hpp"

namespace csvar {
namespace {

Matrix xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (double& v : m.storage()) v = u(rng);
  return m;
}

Matrix ones(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  m.fill(1.0);
  return m;
}

void add_attention_block(ag::ParameterSet& ps, const std::string& p, std::size_t d, std::size_t ffn,
                         std::mt19937_64& rng) {
  for (const char* n : {"wq", "wk", "wv", "wo"}) {
    ps.add(p + ".attn." + n, xavier(d, d, rng));
    ps.add(p + ".attn.b" + std::string(n + 1), Matrix(1, d));
  }
  ps.add(p + ".ln1.g", ones(1, d));
  ps.add(p + ".ln1.b", Matrix(1, d));
  ps.add(p + ".ffn.w1", xavier(d, ffn, rng));
  ps.add(p + ".ffn.b1", Matrix(1, ffn));
  ps.add(p + ".ffn.w2", xavier(ffn, d, rng));
  ps.add(p + ".ffn.b2", Matrix(1, d));
  ps.add(p + ".ln2.g", ones(1, d));
  ps.add(p + ".ln2.b", Matrix(1, d));
}

void add_head(ag::ParameterSet& ps, const std::string& p, std::size_t d, std::mt19937_64& rng) {
  ps.add(p + ".w1", xavier(d, d, rng));
  ps.add(p + ".b1", Matrix(1, d));
  ps.add(p + ".w2", xavier(d, 1, rng));
  ps.add(p + ".b2", Matrix(1, 1));
}

std::vector<double> column(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string_view to_string(TrainingStage stage) {
  return stage == TrainingStage::kWarmup ? "warmup" : "distilled";
}

TrainingStage parse_training_stage(std::string_view name) {
  if (name == "warmup") return TrainingStage::kWarmup;
  if (name == "distilled") return TrainingStage::kDistilled;
  throw ParseError("unknown training stage: " + std::string(name));
}

PatchNet::PatchNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_k;
  const std::size_t ffn = cfg_.ffn_mult * d;
  params_.add("type_emb", xavier(cfg_.n_action_types, cfg_.type_dim(), rng));
  params_.add("proj.w", xavier(cfg_.d_text, cfg_.text_dim(), rng));
  params_.add("proj.b", Matrix(1, cfg_.text_dim()));
  for (std::size_t l = 0; l < cfg_.n_seq_layers; ++l) add_attention_block(params_, "seq" + std::to_string(l), d, ffn, rng);
  for (std::size_t l = 0; l < cfg_.n_lstm_layers; ++l) {
    const std::string p = "lstm" + std::to_string(l);
    params_.add(p + ".w_ih", xavier(d, 4 * d, rng));
    params_.add(p + ".w_hh", xavier(d, 4 * d, rng));
    params_.add(p + ".b", Matrix(1, 4 * d));
  }
  params_.add("gamma", ones(1, kRelationCount));
  params_.add("cls", xavier(1, d, rng));
  for (std::size_t l = 0; l < cfg_.n_graph_layers; ++l)
    add_attention_block(params_, "graph" + std::to_string(l), d, ffn, rng);
  add_head(params_, "session_head", d, rng);
  add_head(params_, "patch_head", d, rng);
}

PatchNet::PatchNet(const ModelConfig& cfg, ag::ParameterSet params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const PatchNet reference(cfg_, 0);
  if (reference.params_.size() != params_.size())
    throw ValidationError("parameter count does not match the model configuration");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& want = reference.params_[i];
    const auto* got = params_.find(want.name);
    if (got == nullptr) throw ValidationError("missing parameter " + want.name);
    if (!got->value.same_shape(want.value)) throw ValidationError("shape mismatch for parameter " + want.name);
  }
}

ag::Var PatchNet::param(ag::Tape& t, const std::string& name) const { return t.param(params_.get(name)); }

ag::AttentionWeights PatchNet::attention(ag::Tape& t, const std::string& p) const {
  return {param(t, p + ".attn.wq"), param(t, p + ".attn.bq"), param(t, p + ".attn.wk"), param(t, p + ".attn.bk"),
          param(t, p + ".attn.wv"), param(t, p + ".attn.bv"), param(t, p + ".attn.wo"), param(t, p + ".attn.bo")};
}

ag::Var PatchNet::block(ag::Tape& t, ag::Var x, const std::string& p, ag::Var bias, const ForwardOptions& opt,
                        std::vector<Matrix>* probs) const {
  const double rate = opt.training ? cfg_.dropout : 0.0;
  auto drop = [&](ag::Var v) { return rate > 0.0 ? ag::dropout(t, v, rate, *opt.rng) : v; };
  ag::Var a = ag::multi_head_attention(t, x, attention(t, p), bias, cfg_.n_heads, probs);
  x = ag::layer_norm(t, ag::add(t, x, drop(a)), param(t, p + ".ln1.g"), param(t, p + ".ln1.b"));
  ag::Var h = ag::relu(t, ag::linear(t, x, param(t, p + ".ffn.w1"), param(t, p + ".ffn.b1")));
  h = ag::linear(t, h, param(t, p + ".ffn.w2"), param(t, p + ".ffn.b2"));
  return ag::layer_norm(t, ag::add(t, x, drop(h)), param(t, p + ".ln2.g"), param(t, p + ".ln2.b"));
}

ag::Var PatchNet::head(ag::Tape& t, ag::Var x, const std::string& p) const {
  ag::Var h = ag::relu(t, ag::linear(t, x, param(t, p + ".w1"), param(t, p + ".b1")));
  return ag::linear(t, h, param(t, p + ".w2"), param(t, p + ".b2"));
}

ag::Var PatchNet::embed_actions(ag::Tape& t, const PreparedSession& s, const ForwardOptions& opt) const {
  const std::size_t n = s.action_count();
  if (n == 0) throw DegenerateSessionError("session " + s.id() + " has no actions");
  if (s.text.rows() != n || s.text.cols() != cfg_.d_text)
    throw ValidationError("session " + s.id() + ": text matrix does not match d_text");
  if (opt.training && cfg_.dropout > 0.0 && opt.rng == nullptr)
    throw ConfigError("training forward with dropout needs an rng");
  for (std::size_t type : s.action_types)
    if (type >= cfg_.n_action_types) throw ValidationError("action type id out of range");

  ag::Var types = ag::gather_rows(t, param(t, "type_emb"), s.action_types);
  ag::Var text = ag::linear(t, t.constant(s.text), param(t, "proj.w"), param(t, "proj.b"));
  ag::Var x = ag::concat_cols(t, types, text);
  if (opt.bypass_sequence_encoder) return x;
  if (opt.training && cfg_.dropout > 0.0) x = ag::dropout(t, x, cfg_.dropout, *opt.rng);
  for (std::size_t l = 0; l < cfg_.n_seq_layers; ++l) x = block(t, x, "seq" + std::to_string(l), {}, opt, nullptr);
  return x;
}

ag::Var PatchNet::encode_patches(ag::Tape& t, ag::Var tokens, std::span<const PatchMeta> patches) const {
  if (patches.empty()) throw DegenerateSessionError("no patches to encode");
  const std::size_t n_tokens = t.value(tokens).rows();
  std::vector<std::size_t> packed;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> last;
  for (const auto& p : patches) {
    if (p.action_indices.empty()) throw ValidationError("empty patch");
    for (std::size_t i : p.action_indices) {
      if (i >= n_tokens) throw ValidationError("patch action index out of range");
      packed.push_back(i);
    }
    offsets.push_back(packed.size());
    last.push_back(packed.size() - 1);
  }
  ag::Var h = ag::gather_rows(t, tokens, std::move(packed));
  for (std::size_t l = 0; l < cfg_.n_lstm_layers; ++l) {
    const std::string p = "lstm" + std::to_string(l);
    h = ag::lstm_layer(t, h, offsets, param(t, p + ".w_ih"), param(t, p + ".w_hh"), param(t, p + ".b"));
  }
  return ag::gather_rows(t, h, std::move(last));
}

GraphVars PatchNet::graph_forward(ag::Tape& t, ag::Var patch_embeddings, ag::Var bias,
                                  const ForwardOptions& opt) const {
  const std::size_t n = t.value(patch_embeddings).rows();
  ag::Var x = ag::prepend_row(t, param(t, "cls"), patch_embeddings);
  std::vector<Matrix> probs;
  for (std::size_t l = 0; l < cfg_.n_graph_layers; ++l) {
    const bool last = l + 1 == cfg_.n_graph_layers;
    x = block(t, x, "graph" + std::to_string(l), bias, opt, last ? &probs : nullptr);
  }
  GraphVars out;
  out.session_embedding = ag::slice_rows(t, x, 0, 1);
  out.refined = ag::slice_rows(t, x, 1, n);
  out.session_logit = head(t, out.session_embedding, "session_head");
  out.patch_logits = head(t, out.refined, "patch_head");

  // [CLS] row over the patch columns, renormalized per head, averaged over heads.
  out.cls_attention.assign(n, 0.0);
  for (const Matrix& p : probs) {
    double mass = 0.0;
    for (std::size_t j = 1; j <= n; ++j) mass += p(0, j);
    for (std::size_t j = 1; j <= n; ++j)
      out.cls_attention[j - 1] += (mass > 0.0 ? p(0, j) / mass : 1.0 / static_cast<double>(n));
  }
  for (double& v : out.cls_attention) v /= static_cast<double>(probs.size());
  return out;
}

ForwardVars PatchNet::forward(ag::Tape& t, const PreparedSession& s, const ForwardOptions& opt) const {
  ForwardVars out;
  out.tokens = embed_actions(t, s, opt);
  out.patch_embeddings = encode_patches(t, out.tokens, s.patches);
  if (cfg_.use_graph_bias) out.adjacency = relation_bias(t, out.patch_embeddings, s.patches, param(t, "gamma"));
  out.graph = graph_forward(t, out.patch_embeddings, out.adjacency, opt);
  return out;
}

ForwardOutput PatchNet::infer(const PreparedSession& s) const {
  ag::Tape t;
  const ForwardVars v = forward(t, s, ForwardOptions{});
  ForwardOutput out;
  out.session_embedding = column(t.value(v.graph.session_embedding));
  out.session_logit = t.value(v.graph.session_logit)(0, 0);
  out.session_score = sigmoid(out.session_logit);
  out.patch_embeddings = t.value(v.patch_embeddings);
  out.refined_patches = t.value(v.graph.refined);
  out.patch_logits = column(t.value(v.graph.patch_logits));
  out.patch_scores.reserve(out.patch_logits.size());
  for (double l : out.patch_logits) out.patch_scores.push_back(sigmoid(l));
  out.cls_attention = v.graph.cls_attention;
  return out;
}

double PatchNet::score_patch_embedding(std::span<const double> embedding) const {
  if (embedding.size() != cfg_.d_k) throw ValidationError("patch embedding must have d_k entries");
  ag::Tape t;
  Matrix row(1, cfg_.d_k);
  std::copy(embedding.begin(), embedding.end(), row.storage().begin());
  return sigmoid(t.value(head(t, t.constant(std::move(row)), "patch_head"))(0, 0));
}

}  // namespace csvar
