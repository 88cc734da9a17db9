#include "csvar/patchnet/config.hpp"

#include "csvar/core/error.hpp"

namespace csvar {

void ModelConfig::validate() const {
  if (d_k < 2) throw ConfigError("d_k must be at least 2");
  if (n_heads == 0 || d_k % n_heads != 0) throw ConfigError("d_k must be divisible by n_heads");
  if (n_graph_layers == 0) throw ConfigError("n_graph_layers must be positive");
  if (n_lstm_layers == 0) throw ConfigError("n_lstm_layers must be positive");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (d_text == 0) throw ConfigError("d_text must be positive");
  if (n_action_types == 0) throw ConfigError("n_action_types must be positive");
  if (max_patches == 0) throw ConfigError("max_patches must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"d_k", cfg.d_k},
                     {"n_heads", cfg.n_heads},
                     {"n_seq_layers", cfg.n_seq_layers},
                     {"n_lstm_layers", cfg.n_lstm_layers},
                     {"n_graph_layers", cfg.n_graph_layers},
                     {"ffn_mult", cfg.ffn_mult},
                     {"dropout", cfg.dropout},
                     {"d_text", cfg.d_text},
                     {"n_action_types", cfg.n_action_types},
                     {"max_patches", cfg.max_patches},
                     {"use_graph_bias", cfg.use_graph_bias}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "d_k") cfg.d_k = value.get<std::size_t>();
      else if (key == "n_heads") cfg.n_heads = value.get<std::size_t>();
      else if (key == "n_seq_layers") cfg.n_seq_layers = value.get<std::size_t>();
      else if (key == "n_lstm_layers") cfg.n_lstm_layers = value.get<std::size_t>();
      else if (key == "n_graph_layers") cfg.n_graph_layers = value.get<std::size_t>();
      else if (key == "ffn_mult") cfg.ffn_mult = value.get<std::size_t>();
      else if (key == "dropout") cfg.dropout = value.get<double>();
      else if (key == "d_text") cfg.d_text = value.get<std::size_t>();
      else if (key == "n_action_types") cfg.n_action_types = value.get<std::size_t>();
      else if (key == "max_patches") cfg.max_patches = value.get<std::size_t>();
      else if (key == "use_graph_bias") cfg.use_graph_bias = value.get<bool>();
      else throw ConfigError("unknown model config key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config key " + key + ": " + e.what());
    }
  }
}

}  // namespace csvar
