#pragma once

#include <cstddef>

#include "csvar/session/session.hpp"
#include "json.hpp"

namespace csvar {

struct ModelConfig {
  std::size_t d_k = 128;
  std::size_t n_heads = 8;
  std::size_t n_seq_layers = 2;
  std::size_t n_lstm_layers = 2;
  std::size_t n_graph_layers = 1;
  std::size_t ffn_mult = 2;  // feed-forward width = ffn_mult * d_k
  double dropout = 0.1;
  std::size_t d_text = 64;
  std::size_t n_action_types = kActionTypeCount;
  std::size_t max_patches = 1024;
  // false removes the relation bias from graph attention (plain self-attention).
  bool use_graph_bias = true;

  void validate() const;
  std::size_t type_dim() const { return d_k / 2; }
  std::size_t text_dim() const { return d_k - d_k / 2; }
};

// Missing keys keep their defaults; unknown keys are rejected.
void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

}  // namespace csvar
