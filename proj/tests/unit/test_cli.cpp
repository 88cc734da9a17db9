#include <filesystem>
#include <fstream>
#include <string>

#include "cli.hpp"
#include "csvar/core/counters.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace csvar;

namespace {

// Small enough to run the whole staged pipeline in a few seconds.
fs::path write_tiny_config(const fs::path& dir) {
  const nlohmann::json cfg = {
      {"seed", 3},
      {"out_dir", dir.string()},
      {"synth", {{"n_sessions", 60}, {"positive_rate", 0.3}, {"seed", 5}}},
      {"model", {{"d_k", 8}, {"n_heads", 2}, {"n_seq_layers", 1}, {"d_text", 32}, {"dropout", 0.0}}},
      {"warmup", {{"learning_rate", 1e-3}, {"batch_size", 8}, {"max_epochs", 2}, {"patience", 2}}},
      {"distill", {{"learning_rate", 1e-3}, {"batch_size", 8}, {"max_epochs", 2}, {"patience", 2}}},
      {"selection", {{"threshold", 0.0}}},
      {"llm", {{"mock", true}, {"use_cache", true}, {"parallelism", 2}}}};
  fs::create_directories(dir);
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

int run(const fs::path& config, std::vector<std::string> args) {
  args.insert(args.begin(), {"--config", config.string(), "--quiet"});
  return cli::run(args);
}

}  // namespace

TEST_CASE("staged pipeline through the CLI") {
  const auto dir = fs::temp_directory_path() / "csvar_cli_test";
  fs::remove_all(dir);
  const auto config = write_tiny_config(dir);

  REQUIRE(run(config, {"generate"}) == 0);
  CHECK(fs::exists(dir / "data" / "train.jsonl"));
  CHECK(fs::exists(dir / "data" / "truth.json"));

  REQUIRE(run(config, {"warmup"}) == 0);
  CHECK(fs::exists(dir / "warmup.ckpt"));
  CHECK(fs::file_size(dir / "metrics" / "warmup.jsonl") > 0);

  counters::reset();
  REQUIRE(run(config, {"index"}) == 0);
  CHECK(fs::exists(dir / "index" / "embeddings.bin"));
  const auto summary_calls = counters::llm_calls().load();
  CHECK(summary_calls > 0);

  counters::reset();
  REQUIRE(run(config, {"reason"}) == 0);
  CHECK(counters::llm_calls().load() > 0);
  CHECK(counters::retrieval_calls().load() > 0);
  std::ifstream teachers(dir / "teachers.jsonl");
  std::string line;
  std::size_t records = 0, with_neighbor = 0;
  while (std::getline(teachers, line)) {
    const auto j = nlohmann::json::parse(line);
    ++records;
    for (const auto& n : j.at("neighbor_sessions")) {
      if (n.get<std::string>().empty()) continue;
      ++with_neighbor;
      CHECK(n.get<std::string>() != j.at("session_id").get<std::string>());
    }
  }
  CHECK(records > 0);
  CHECK(with_neighbor > 0);

  // Same prompts again: all answered from the transcript cache.
  counters::reset();
  REQUIRE(run(config, {"reason"}) == 0);
  CHECK(counters::llm_calls().load() == 0);

  REQUIRE(run(config, {"distill"}) == 0);
  CHECK(fs::exists(dir / "distilled.ckpt"));

  counters::reset();
  REQUIRE(run(config, {"infer", "--heatmaps", (dir / "heatmaps").string()}) == 0);
  CHECK(counters::llm_calls().load() == 0);
  CHECK(counters::retrieval_calls().load() == 0);
  CHECK(fs::file_size(dir / "predictions.jsonl") > 0);
  CHECK(!fs::is_empty(dir / "heatmaps"));

  REQUIRE(run(config, {"eval", "--split", "test"}) == 0);
  const auto report = nlohmann::json::parse(std::ifstream(dir / "eval_test.json"));
  CHECK(report.at("metrics").contains("pr_auc"));
  CHECK(report.contains("localization"));
  CHECK(fs::exists(dir / "manifests" / "infer.json"));

  CHECK(run(config, {"infer", "--checkpoint", (dir / "missing.ckpt").string()}) == 1);
  CHECK(run(config, {"no-such-command"}) != 0);
  fs::remove_all(dir);
}
