#pragma once

#include <map>
#include <string>
#include <vector>

#include "themescope/corpus.hpp"
#include "themescope/embedding.hpp"

namespace themescope {

inline constexpr int kNoise = -1;

struct ClusterAssignment {
  std::vector<int> labels;            // kNoise or 0..n_clusters-1
  std::vector<double> probabilities;  // 0 for noise
  int n_clusters = 0;

  std::size_t size() const { return labels.size(); }
  // Row indices per cluster, ascending.
  std::vector<std::vector<std::size_t>> members() const;
};

struct ValidityReport {
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  std::size_t n_points_scored = 0;
};

struct HdbscanParams {
  std::size_t min_cluster_size = 20;
  std::size_t min_samples = 5;

  std::string fingerprint() const;
};

namespace clustering {

// One row of the condensed cluster tree. `child` < n is a point, otherwise a
// cluster id (root cluster id is n).
struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t child_size;
};

struct HdbscanResult {
  ClusterAssignment assignment;
  std::vector<CondensedRow> condensed_tree;
  std::vector<double> core_distances;
};

HdbscanResult hdbscan(const Matrix& y, const HdbscanParams& params);
ClusterAssignment hdbscan_cluster(const VectorSet& y, std::size_t min_cluster_size, std::size_t min_samples);

// Per cluster: member rows ordered by (probability desc, id asc), first k.
std::map<int, std::vector<std::size_t>> select_representative_rows(const ClusterAssignment& a,
                                                                    const std::vector<std::string>& ids,
                                                                    std::size_t k);
std::map<int, std::vector<Document>> select_representatives(const ClusterAssignment& a, const Corpus& corpus,
                                                            std::size_t k);

// Euclidean metrics over non-noise points. Throw when fewer than two
// clusters remain.
double silhouette(const Matrix& y, const std::vector<int>& labels);
double davies_bouldin(const Matrix& y, const std::vector<int>& labels);
ValidityReport validity(const Matrix& y, const std::vector<int>& labels);

inline double silhouette(const VectorSet& y, const ClusterAssignment& a) { return silhouette(y.matrix(), a.labels); }
inline double davies_bouldin(const VectorSet& y, const ClusterAssignment& a) {
  return davies_bouldin(y.matrix(), a.labels);
}

std::string assignment_to_csv(const ClusterAssignment& a, const std::vector<std::string>& ids);
ClusterAssignment assignment_from_csv(std::string_view text, const std::vector<std::string>& ids);
std::string validity_to_json(const ValidityReport& r);

}  // namespace clustering
}  // namespace themescope
