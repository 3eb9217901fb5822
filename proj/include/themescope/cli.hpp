#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "themescope/baselines.hpp"
#include "themescope/corpus.hpp"
#include "themescope/evaluation.hpp"
#include "themescope/stancelab.hpp"
#include "themescope/themepipeline.hpp"

namespace themescope::cli {

struct CorpusSource {
  std::string path;  // as written in the config; resolved against the config directory
  corpus::Format format = corpus::Format::Jsonl;
};

struct EmbeddingConfig {
  std::string provider = "hashing";  // hashing | remote
  std::size_t dim = 256;
  std::uint64_t seed = 0x5eed;
  std::string endpoint;  // remote; EMBED_ENDPOINT fills it when empty
  std::string model = "remote";
  std::size_t max_batch = 64;
  std::optional<std::string> cache_dir;
};

struct ChatConfig {
  std::string provider = "mock";  // mock | remote
  std::string script = "synthetic";  // mock script path, or "synthetic" for the built-in topic script
  std::string endpoint;  // remote; CHAT_ENDPOINT fills it when empty
  std::string model = "chat-model";
  int max_in_flight = 4;
};

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve here
  std::vector<CorpusSource> corpora;
  std::optional<std::string> keywords;
  std::string stopwords;  // empty = bundled list
  double dedup_threshold = 0.80;
  DiscoveryConfig discovery;
  AssignStrategy strategy = AssignStrategy::SummaryMediated;
  EmbeddingConfig embedding;
  std::optional<EmbeddingConfig> summary_embedding;  // unset = reuse the document provider
  ChatConfig chat;
  std::size_t workers = 4;
  LdaParams lda;
  std::size_t keyword_top_n = 5;
  std::vector<std::size_t> retrieval_k{1, 5};
  std::vector<EventDefinition> events;
  SplitSpec split;
  StanceGrid stance_grid;
  LogRegParams logreg;
  bool stance_llm = false;
  UmapConfig plot_umap;

  static PipelineConfig defaults();
  // Unknown keys are rejected; missing keys keep their defaults.
  static PipelineConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::filesystem::path resolve(const std::string& p) const;
  // Throws when a threshold is out of range or a referenced file is missing.
  void validate() const;
};

// Runs one subcommand. Returns 0 on success, 1 on a pipeline error (a JSON
// error object is written to stderr) and 2 on a usage error.
// args excludes the program name.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace themescope::cli
