#include "csvar/pipeline/config.hpp"

#include <fstream>

#include "csvar/core/error.hpp"
#include "csvar/core/hash.hpp"

namespace csvar::pipeline {
namespace {

using json = nlohmann::json;

// Visits known keys; anything else is a ConfigError.
template <typename Fn>
void each_key(const json& j, const std::string& section, Fn fn) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!fn(k, v)) throw ConfigError("unknown key '" + k + "' in " + section);
}

json synth_json(const synth::SynthConfig& s) {
  return {{"n_sessions", s.n_sessions},       {"positive_rate", s.positive_rate},
          {"n_templates", s.n_templates},     {"min_viewers", s.min_viewers},
          {"max_viewers", s.max_viewers},     {"min_actions", s.min_actions},
          {"max_actions", s.max_actions},     {"seed", s.seed},
          {"d_text", s.d_text},               {"horizon", s.discretization.horizon},
          {"slot_width", s.discretization.slot_width},
          {"decoy_rate", s.decoy_rate},       {"phase_drop_rate", s.phase_drop_rate},
          {"signature_leak_rate", s.signature_leak_rate}};
}

void read_synth(const json& j, synth::SynthConfig& s) {
  each_key(j, "synth", [&](const std::string& k, const json& v) {
    if (k == "n_sessions") s.n_sessions = v.get<std::size_t>();
    else if (k == "positive_rate") s.positive_rate = v.get<double>();
    else if (k == "n_templates") s.n_templates = v.get<std::size_t>();
    else if (k == "min_viewers") s.min_viewers = v.get<std::size_t>();
    else if (k == "max_viewers") s.max_viewers = v.get<std::size_t>();
    else if (k == "min_actions") s.min_actions = v.get<std::size_t>();
    else if (k == "max_actions") s.max_actions = v.get<std::size_t>();
    else if (k == "seed") s.seed = v.get<std::uint64_t>();
    else if (k == "d_text") s.d_text = v.get<std::size_t>();
    else if (k == "horizon") s.discretization.horizon = v.get<double>();
    else if (k == "slot_width") s.discretization.slot_width = v.get<double>();
    else if (k == "decoy_rate") s.decoy_rate = v.get<double>();
    else if (k == "phase_drop_rate") s.phase_drop_rate = v.get<double>();
    else if (k == "signature_leak_rate") s.signature_leak_rate = v.get<double>();
    else return false;
    return true;
  });
}

json llm_json(const LlmSettings& l) {
  return {{"mock", l.mock},
          {"endpoint", l.http.endpoint},
          {"model", l.http.model},
          {"api_key_env", l.http.api_key_env},
          {"timeout_seconds", l.http.timeout_seconds},
          {"max_retries", l.http.max_retries},
          {"cache", l.cache.string()},
          {"use_cache", l.use_cache},
          {"parallelism", l.parallelism}};
}

void read_llm(const json& j, LlmSettings& l) {
  each_key(j, "llm", [&](const std::string& k, const json& v) {
    if (k == "mock") l.mock = v.get<bool>();
    else if (k == "endpoint") l.http.endpoint = v.get<std::string>();
    else if (k == "model") l.http.model = v.get<std::string>();
    else if (k == "api_key_env") l.http.api_key_env = v.get<std::string>();
    else if (k == "timeout_seconds") l.http.timeout_seconds = v.get<double>();
    else if (k == "max_retries") l.http.max_retries = v.get<int>();
    else if (k == "cache") l.cache = v.get<std::string>();
    else if (k == "use_cache") l.use_cache = v.get<bool>();
    else if (k == "parallelism") l.parallelism = v.get<std::size_t>();
    else return false;
    return true;
  });
}

}  // namespace

DataPaths PipelineConfig::resolved_data() const {
  DataPaths d = data;
  const auto dir = out_dir / "data";
  if (d.train.empty()) d.train = dir / "train.jsonl";
  if (d.val.empty()) d.val = dir / "val.jsonl";
  if (d.test.empty()) d.test = dir / "test.jsonl";
  if (d.truth.empty()) d.truth = dir / "truth.json";
  return d;
}

std::filesystem::path PipelineConfig::llm_cache() const {
  return llm.cache.empty() ? out_dir / "llm_cache.jsonl" : llm.cache;
}

void PipelineConfig::propagate() {
  warmup.seed = seed;
  distill.seed = seed;
  warmup.ablation = ablation;
  distill.ablation = ablation;
  if (ablation == distill::AblationMode::kNoGraph) model.use_graph_bias = false;
  preprocess.horizon = synth.discretization.horizon;
}

void PipelineConfig::validate() const {
  synth.validate();
  model.validate();
  warmup.validate();
  distill.validate();
  loss.validate();
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || train_fraction + val_fraction >= 1.0)
    throw ConfigError("split fractions must be positive and leave room for a test split");
  if (selection.max_host + selection.max_viewer > llm::kMaxPromptPatches)
    throw ConfigError("key-patch caps exceed the prompt patch limit");
  if (selection.max_host + selection.max_viewer == 0) throw ConfigError("key-patch caps are both zero");
  if (llm.parallelism == 0) throw ConfigError("llm.parallelism must be positive");
  if (!llm.mock && (llm.http.endpoint.empty() || llm.http.model.empty()))
    throw ConfigError("llm.endpoint and llm.model are required unless llm.mock is set");
  if (out_dir.empty()) throw ConfigError("out_dir is empty");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = json{{"seed", c.seed},
           {"out_dir", c.out_dir.string()},
           {"data",
            {{"train", c.data.train.string()},
             {"val", c.data.val.string()},
             {"test", c.data.test.string()},
             {"truth", c.data.truth.string()}}},
           {"synth", synth_json(c.synth)},
           {"split", {{"train", c.train_fraction}, {"val", c.val_fraction}}},
           {"preprocess", {{"max_viewers", c.preprocess.max_viewers}, {"max_actions", c.preprocess.max_actions}}},
           {"model", c.model},
           {"warmup", c.warmup},
           {"distill", c.distill},
           {"loss", c.loss},
           {"selection",
            {{"max_host", c.selection.max_host},
             {"max_viewer", c.selection.max_viewer},
             {"threshold", c.selection.threshold}}},
           {"llm", llm_json(c.llm)},
           {"ablation", std::string(distill::to_string(c.ablation))}};
}

void from_json(const nlohmann::json& j, PipelineConfig& out) {
  PipelineConfig c;
  try {
    each_key(j, "config", [&](const std::string& k, const json& v) {
      if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "out_dir") c.out_dir = v.get<std::string>();
      else if (k == "data")
        each_key(v, "data", [&](const std::string& dk, const json& dv) {
          if (dk == "train") c.data.train = dv.get<std::string>();
          else if (dk == "val") c.data.val = dv.get<std::string>();
          else if (dk == "test") c.data.test = dv.get<std::string>();
          else if (dk == "truth") c.data.truth = dv.get<std::string>();
          else return false;
          return true;
        });
      else if (k == "synth") read_synth(v, c.synth);
      else if (k == "split")
        each_key(v, "split", [&](const std::string& sk, const json& sv) {
          if (sk == "train") c.train_fraction = sv.get<double>();
          else if (sk == "val") c.val_fraction = sv.get<double>();
          else return false;
          return true;
        });
      else if (k == "preprocess")
        each_key(v, "preprocess", [&](const std::string& pk, const json& pv) {
          if (pk == "max_viewers") c.preprocess.max_viewers = pv.get<std::size_t>();
          else if (pk == "max_actions") c.preprocess.max_actions = pv.get<std::size_t>();
          else return false;
          return true;
        });
      else if (k == "model") {
        json merged = c.model;
        merged.update(v);
        c.model = merged.get<ModelConfig>();
      } else if (k == "warmup" || k == "distill") {
        json merged = k == "warmup" ? json(c.warmup) : json(c.distill);
        merged.update(v);
        (k == "warmup" ? c.warmup : c.distill) = merged.get<distill::TrainConfig>();
      } else if (k == "loss") c.loss = v.get<distill::LossWeights>();
      else if (k == "selection")
        each_key(v, "selection", [&](const std::string& sk, const json& sv) {
          if (sk == "max_host") c.selection.max_host = sv.get<std::size_t>();
          else if (sk == "max_viewer") c.selection.max_viewer = sv.get<std::size_t>();
          else if (sk == "threshold") c.selection.threshold = sv.get<double>();
          else return false;
          return true;
        });
      else if (k == "llm") read_llm(v, c.llm);
      else if (k == "ablation") c.ablation = distill::parse_ablation_mode(v.get<std::string>());
      else return false;
      return true;
    });
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.propagate();
  c.validate();
  out = std::move(c);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<PipelineConfig>();
}

std::string config_hash(const PipelineConfig& c) { return sha256_hex(json(c).dump()); }

}  // namespace csvar::pipeline
