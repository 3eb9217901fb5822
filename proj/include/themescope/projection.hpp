#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "themescope/embedding.hpp"

namespace themescope {

struct PcaModel {
  Eigen::VectorXd mean;                // d
  Eigen::MatrixXd basis;               // d x c, orthonormal columns
  Eigen::VectorXd explained_variance;  // c, non-increasing

  std::size_t input_dim() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t components() const { return static_cast<std::size_t>(basis.cols()); }
  Matrix transform(const Matrix& x) const;
};

struct UmapConfig {
  std::size_t target_dim = 20;
  std::size_t n_neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  std::size_t n_epochs = 200;
  std::uint64_t seed = 42;
  double learning_rate = 1.0;
  double repulsion_strength = 1.0;
  std::size_t negative_sample_rate = 5;

  std::string fingerprint() const;
};

namespace projection {

// PCA through the covariance eigendecomposition when d <= 1024, otherwise a
// thin SVD of the centered data. Each basis column is sign-normalized so its
// largest-magnitude entry is positive.
std::pair<PcaModel, VectorSet> pca_fit_transform(const VectorSet& x, std::size_t n_components);

// Curve parameters (a, b) such that 1 / (1 + a d^(2b)) approximates the
// min_dist/spread membership profile.
std::pair<double, double> fit_ab(double spread, double min_dist);

// Exact k nearest neighbors by Euclidean distance, self included at slot 0.
struct KnnGraph {
  std::vector<std::vector<std::size_t>> indices;
  std::vector<std::vector<double>> distances;
};
KnnGraph exact_knn(const Matrix& x, std::size_t k);

// Per-point (rho, sigma) such that sum_j exp(-(d_ij - rho) / sigma) over
// non-self neighbors equals log2(k).
struct Bandwidths {
  std::vector<double> rho;
  std::vector<double> sigma;
};
Bandwidths smooth_knn_dist(const KnnGraph& knn, double local_connectivity = 1.0);

// Symmetric fuzzy-union edge list (i, j, w) with i != j, sorted by (i, j).
struct FuzzyEdge {
  std::size_t head, tail;
  double weight;
};
std::vector<FuzzyEdge> fuzzy_simplicial_set(const KnnGraph& knn, const Bandwidths& bw);

VectorSet umap_fit_transform(const VectorSet& x, const UmapConfig& cfg);

// Versioned binary model files: magic "TSPJ", u32 version, u32 kind,
// u32 input dim, u32 output dim, u64 seed, then payload.
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);
void save_umap_embedding(const VectorSet& y, const UmapConfig& cfg, std::size_t input_dim,
                         const std::filesystem::path& path);
VectorSet load_umap_embedding(const std::filesystem::path& path, UmapConfig* cfg = nullptr);

}  // namespace projection
}  // namespace themescope
