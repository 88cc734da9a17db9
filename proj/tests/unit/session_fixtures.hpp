#pragma once

#include <string>
#include <vector>

#include "csvar/patchnet/model.hpp"
#include "csvar/synth/text_embedder.hpp"

namespace csvar::testing {

inline ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_k = 8;
  cfg.n_heads = 2;
  cfg.n_seq_layers = 1;
  cfg.n_lstm_layers = 2;
  cfg.n_graph_layers = 1;
  cfg.dropout = 0.0;
  cfg.d_text = 6;
  return cfg;
}

inline Action act(const std::string& user, double t, ActionType type, const std::string& text) {
  Action a;
  a.user_id = user;
  a.timestamp = t;
  a.type = type;
  a.raw_text = text;
  return a;
}

inline PreparedSession prepare(std::vector<Action> actions, std::size_t d_text, std::size_t max_patches = 1024,
                               const std::string& id = "s", int label = 1) {
  Session s;
  s.session_id = id;
  s.host_id = "host";
  s.actions = std::move(actions);
  s.label = label;
  derive_viewers(s);
  HashingEmbedder emb(d_text);
  return prepare_session(preprocess(s, PreprocessConfig{}), DiscretizationConfig{}, emb, max_patches);
}

// Two patches: host in slot 1 (two actions), one viewer in slot 2.
inline PreparedSession two_patch_session(std::size_t d_text) {
  return prepare({act("host", 10, ActionType::kSpeechTranscript, "welcome to the stream"),
                  act("host", 50, ActionType::kComment, "big giveaway soon"),
                  act("v1", 120, ActionType::kComment, "hello everyone")},
                 d_text);
}

inline PreparedSession three_patch_session(std::size_t d_text) {
  return prepare({act("host", 10, ActionType::kSpeechTranscript, "welcome to the stream"),
                  act("v1", 30, ActionType::kGift, ""),
                  act("host", 50, ActionType::kComment, "join the group now"),
                  act("v1", 650, ActionType::kComment, "it really works"),
                  act("v1", 660, ActionType::kLike, "")},
                 d_text);
}

}  // namespace csvar::testing
