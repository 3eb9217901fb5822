#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "themescope/clustering.hpp"
#include "themescope/corpus.hpp"
#include "themescope/embedding.hpp"
#include "themescope/llmgateway.hpp"
#include "themescope/projection.hpp"

namespace themescope {

struct Representative {
  std::string id;
  std::string text;
  double probability = 0.0;
};

struct ThemeCluster {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  std::vector<Representative> representatives;  // at most 5
  std::string summary;
  std::string theme_label;
  std::vector<int> merged_from;  // original coherent cluster ids
};

struct TauScore {
  double tau = 0.0;
  std::size_t n_groups = 0;
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  bool valid = false;
};

struct MergeConfig {
  std::vector<double> tau_grid{0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90};
  std::optional<double> selected_tau;

  void validate() const;
};

struct ThemeModel {
  static constexpr int kSchemaVersion = 1;

  std::vector<ThemeCluster> clusters;
  std::string config_fingerprint;
  std::string corpus_ref;
  // Merge bookkeeping.
  std::size_t n_clusters_found = 0;     // HDBSCAN clusters
  std::size_t n_coherent = 0;           // after the coherency filter
  std::optional<double> selected_tau;
  std::vector<TauScore> tau_scores;

  std::size_t n_absorbed() const { return n_coherent - clusters.size(); }
  // Index of the cluster with this case-folded label, or -1.
  int find_label(const std::string& label) const;

  nlohmann::json to_json() const;
  static ThemeModel from_json(const nlohmann::json& j);
  std::string serialize() const;  // pretty JSON with trailing newline
  static ThemeModel load(const std::filesystem::path& path);
};

enum class AssignStrategy { SummaryMediated, DirectTheme };
std::string_view to_string(AssignStrategy s);
AssignStrategy parse_assign_strategy(std::string_view s);

struct ThemeAssignment {
  std::vector<std::string> ids;
  std::vector<std::optional<std::string>> labels;  // nullopt = UNASSIGNED
  AssignStrategy strategy = AssignStrategy::SummaryMediated;
  std::string model_fingerprint;
  std::size_t failed_batches = 0;

  std::size_t n_unassigned() const;
  // "# fingerprint=..." line, then id,theme_label,strategy.
  std::string to_csv() const;
  static ThemeAssignment from_csv(std::string_view text);
};

struct AuditEntry {
  std::string stage;
  int cluster_id = 0;
  std::string verdict;
  std::string reasoning;
  std::vector<std::string> representative_ids;
};

std::string audit_to_jsonl(const std::vector<AuditEntry>& entries);

struct DiscoveryConfig {
  std::size_t pca_components = 100;
  UmapConfig umap;
  HdbscanParams hdbscan;
  std::size_t representatives_k = 5;
  MergeConfig merge;

  nlohmann::json to_json() const;
};

struct Providers {
  EmbeddingProvider& embedder;
  Gateway& gateway;
  EmbeddingCache* cache = nullptr;
  EmbeddingProvider* summary_embedder = nullptr;  // cluster summaries; defaults to embedder
};

inline constexpr const char* kStages[] = {"embed",     "project",   "cluster", "represent",
                                          "coherency", "summarize", "merge",   "label"};

struct DiscoveryOptions {
  std::optional<std::filesystem::path> run_dir;  // checkpoints go here when set
  bool resume = false;
  std::optional<std::string> stop_after;  // stage name
};

struct DiscoveryResult {
  ThemeModel model;
  std::vector<std::string> computed_stages;
  std::vector<std::string> resumed_stages;
  std::vector<AuditEntry> audit;
  ClusterAssignment clusters;
  std::vector<std::string> doc_ids;
  bool stopped_early = false;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

namespace pipeline {

// sha256 over the canonical JSON of config, provider and template versions.
std::string config_fingerprint(const DiscoveryConfig& cfg, const EmbeddingProvider& embedder, const Gateway& gateway,
                               const EmbeddingProvider* summary_embedder = nullptr);

struct CoherencyOutcome {
  std::vector<ThemeCluster> retained;
  std::vector<AuditEntry> audit;
};
CoherencyOutcome filter_coherent(const std::vector<ThemeCluster>& clusters, Gateway& gateway,
                                 std::size_t workers = 4);

// Connected components of the graph with an edge where cosine >= tau. Groups
// hold row indices ascending and are ordered by their smallest row.
std::vector<std::vector<std::size_t>> merge_redundant(const Matrix& summary_vectors, double tau);

struct GridResult {
  MergeConfig config;
  std::vector<TauScore> scores;
};
// doc_cluster[i] is the row of summary_vectors that document i belongs to,
// or kNoise.
GridResult tau_grid_search(const MergeConfig& cfg, const Matrix& summary_vectors, const Matrix& reduced_docs,
                           const std::vector<int>& doc_cluster);

// Rebuilds merged clusters: members and provenance are unioned, and groups
// of more than one cluster are re-summarized from the top k representatives
// of the union (probability desc, id asc).
std::vector<ThemeCluster> consolidate(const std::vector<ThemeCluster>& clusters,
                                      const std::vector<std::vector<std::size_t>>& groups, Gateway& gateway,
                                      std::size_t k = 5, std::size_t workers = 4);

// Labels every cluster. Clusters whose labels coincide after case folding
// are folded into one theme, which keeps the label and is re-summarized.
std::vector<ThemeCluster> label_clusters(const std::vector<ThemeCluster>& clusters, Gateway& gateway,
                                         std::size_t k = 5, std::size_t workers = 4);

DiscoveryResult run_discovery(const Corpus& corpus, Providers providers, const DiscoveryConfig& config,
                              const DiscoveryOptions& options = {});

ThemeAssignment assign_corpus(const Corpus& corpus, const ThemeModel& model, AssignStrategy strategy,
                              Gateway& gateway, std::size_t workers = 4);

}  // namespace pipeline
}  // namespace themescope
