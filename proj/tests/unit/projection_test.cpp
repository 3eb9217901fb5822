#include <gtest/gtest.h>

#include <filesystem>

#include "themescope/projection.hpp"
#include "support/oracles.hpp"

using namespace themescope;

namespace {

VectorSet as_set(const oracle::Points& p) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < p.size(); ++i) ids.push_back("p" + std::to_string(i));
  return VectorSet(ids, oracle::to_matrix(p), "test");
}

oracle::Points random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  util::Rng rng(seed);
  oracle::Points p(n, std::vector<double>(d));
  for (auto& row : p)
    for (std::size_t j = 0; j < d; ++j) row[j] = rng.normal() * static_cast<double>(d - j);
  return p;
}

}  // namespace

TEST(Pca, SubspaceMatchesJacobiOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto pts = random_points(60, 8, seed);
    const std::size_t n = pts.size(), d = pts[0].size(), c = 3;
    std::vector<double> mean(d, 0.0);
    for (auto& r : pts)
      for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / n;
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (auto& r : pts)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1);
    std::vector<double> vals;
    std::vector<std::vector<double>> vecs;
    oracle::jacobi_eigen(cov, vals, vecs);

    auto [model, out] = projection::pca_fit_transform(as_set(pts), c);
    ASSERT_EQ(model.components(), c);
    ASSERT_EQ(out.dim(), c);
    Eigen::MatrixXd ref(d, c);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t k = 0; k < c; ++k) ref(a, k) = vecs[a][k];
    // Singular values of Q1^T Q2 are the cosines of the principal angles.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ref.transpose() * model.basis);
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
      EXPECT_LT(std::acos(std::min(1.0, svd.singularValues()(k))), 1e-6);
    for (std::size_t k = 0; k < c; ++k) EXPECT_NEAR(model.explained_variance(k), vals[k], 1e-8);
  }
}

TEST(Pca, BasisIsOrthonormalAndSignNormalized) {
  auto pts = random_points(40, 6, 9);
  auto [model, out] = projection::pca_fit_transform(as_set(pts), 4);
  Eigen::MatrixXd gram = model.basis.transpose() * model.basis;
  EXPECT_TRUE(gram.isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-10));
  for (Eigen::Index k = 0; k < model.basis.cols(); ++k) {
    Eigen::Index arg;
    model.basis.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(model.basis(arg, k), 0.0);
  }
  EXPECT_TRUE(model.transform(oracle::to_matrix(pts)).isApprox(out.matrix(), 1e-12));
}

TEST(Pca, RejectsTooManyComponents) {
  auto pts = random_points(5, 3, 1);
  EXPECT_THROW(projection::pca_fit_transform(as_set(pts), 4), Error);
}

TEST(Pca, SaveLoadRoundTrip) {
  auto pts = random_points(30, 5, 2);
  auto [model, out] = projection::pca_fit_transform(as_set(pts), 2);
  auto path = std::filesystem::temp_directory_path() / "themescope-pca.bin";
  projection::save_pca(model, path);
  auto back = projection::load_pca(path);
  EXPECT_TRUE(back.basis.isApprox(model.basis));
  EXPECT_TRUE(back.mean.isApprox(model.mean));
  std::filesystem::remove(path);
}

TEST(Umap, FitAbMatchesReferenceCurve) {
  auto [a, b] = projection::fit_ab(1.0, 0.1);
  // Reference values for the default spread/min_dist pair.
  EXPECT_NEAR(a, 1.577, 0.02);
  EXPECT_NEAR(b, 0.895, 0.01);
}

TEST(Umap, KnnIncludesSelfFirst) {
  auto pts = random_points(20, 3, 4);
  auto knn = projection::exact_knn(oracle::to_matrix(pts), 5);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(knn.indices[i][0], i);
    EXPECT_EQ(knn.distances[i][0], 0.0);
    for (std::size_t r = 1; r < 5; ++r) EXPECT_LE(knn.distances[i][r - 1], knn.distances[i][r]);
  }
}

TEST(Umap, BandwidthsHitLog2K) {
  auto pts = random_points(30, 4, 6);
  const std::size_t k = 8;
  auto knn = projection::exact_knn(oracle::to_matrix(pts), k);
  auto bw = projection::smooth_knn_dist(knn);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double s = 0;
    for (std::size_t r = 1; r < k; ++r) s += std::exp(-std::max(0.0, knn.distances[i][r] - bw.rho[i]) / bw.sigma[i]);
    EXPECT_NEAR(s, std::log2(static_cast<double>(k)), 1e-3);
  }
  auto edges = projection::fuzzy_simplicial_set(knn, bw);
  for (const auto& e : edges) {
    EXPECT_NE(e.head, e.tail);
    EXPECT_GT(e.weight, 0.0);
    EXPECT_LE(e.weight, 1.0);
  }
}

TEST(Umap, TrustworthyOnBlobsAndByteDeterministic) {
  auto blobs = oracle::gaussian_blobs(40, 10, 0.5, 10.0, 3, 21);
  UmapConfig cfg;
  cfg.target_dim = 2;
  auto y1 = projection::umap_fit_transform(as_set(blobs.points), cfg);
  auto y2 = projection::umap_fit_transform(as_set(blobs.points), cfg);
  ASSERT_EQ(y1.dim(), 2u);
  EXPECT_EQ(0, std::memcmp(y1.matrix().data(), y2.matrix().data(), sizeof(double) * y1.matrix().size()));
  EXPECT_GE(oracle::trustworthiness(blobs.points, oracle::to_points(y1.matrix()), 15), 0.95);
  cfg.seed = 43;
  auto y3 = projection::umap_fit_transform(as_set(blobs.points), cfg);
  EXPECT_FALSE(y3.matrix() == y1.matrix());
}

TEST(Umap, SaveLoadRoundTrip) {
  auto blobs = oracle::gaussian_blobs(10, 4, 0.5, 10.0, 2, 3);
  UmapConfig cfg;
  cfg.target_dim = 2;
  cfg.n_neighbors = 5;
  cfg.n_epochs = 20;
  auto y = projection::umap_fit_transform(as_set(blobs.points), cfg);
  auto path = std::filesystem::temp_directory_path() / "themescope-umap.bin";
  projection::save_umap_embedding(y, cfg, 4, path);
  UmapConfig back_cfg;
  auto back = projection::load_umap_embedding(path, &back_cfg);
  EXPECT_EQ(back.ids(), y.ids());
  EXPECT_EQ(back.matrix(), y.matrix());
  EXPECT_EQ(back_cfg.fingerprint(), cfg.fingerprint());
  std::filesystem::remove(path);
}
