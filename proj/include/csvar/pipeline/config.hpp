#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "csvar/distill/train.hpp"
#include "csvar/index/key_patches.hpp"
#include "csvar/llm/client.hpp"
#include "csvar/patchnet/config.hpp"
#include "csvar/session/patch_grid.hpp"
#include "csvar/synth/synthgen.hpp"
#include "json.hpp"

namespace csvar::pipeline {

// Empty paths resolve under <out_dir>/data.
struct DataPaths {
  std::filesystem::path train, val, test, truth;
};

struct LlmSettings {
  bool mock = true;                // the truth-reading stand-in teacher
  llm::HttpClientConfig http;
  std::filesystem::path cache;     // empty: <out_dir>/llm_cache.jsonl
  bool use_cache = true;
  std::size_t parallelism = 4;
};

// One declarative file drives every subcommand. `seed` seeds model init,
// training, the split and the mock teacher; the dataset has its own
// synth.seed so several training seeds can share one dataset.
struct PipelineConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "runs/default";
  DataPaths data;
  synth::SynthConfig synth;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  PreprocessConfig preprocess;
  ModelConfig model;
  distill::TrainConfig warmup;
  distill::TrainConfig distill;
  distill::LossWeights loss;
  SelectionConfig selection;
  LlmSettings llm;
  distill::AblationMode ablation = distill::AblationMode::kFull;

  const DiscretizationConfig& discretization() const { return synth.discretization; }
  DataPaths resolved_data() const;
  std::filesystem::path llm_cache() const;
  // Applies `seed` and `ablation` to the stage configs.
  void propagate();
  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// Reads a JSON config; keys that are absent keep their defaults, unknown keys
// are errors. Throws IoError / ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
// Hash of the canonical JSON dump, used in manifests.
std::string config_hash(const PipelineConfig& c);

}  // namespace csvar::pipeline
