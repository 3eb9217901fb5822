#include <gtest/gtest.h>

#include "themescope/clustering.hpp"
#include "support/oracles.hpp"

using namespace themescope;

namespace {

oracle::Points random_points(std::size_t n, std::size_t d, util::Rng& rng) {
  oracle::Points p(n, std::vector<double>(d));
  for (auto& row : p)
    for (auto& v : row) v = rng.uniform(-5.0, 5.0);
  return p;
}

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(Validity, FourPointFixture) {
  auto m = oracle::to_matrix({{0, 0}, {0, 1}, {10, 0}, {10, 1}});
  std::vector<int> labels{0, 0, 1, 1};
  const double b = (10.0 + std::sqrt(101.0)) / 2.0;
  EXPECT_NEAR(clustering::silhouette(m, labels), (b - 1.0) / b, 1e-12);
  EXPECT_NEAR(clustering::silhouette(m, labels), 0.9003, 1e-4);
  EXPECT_NEAR(clustering::davies_bouldin(m, labels), 0.1, 1e-12);
}

TEST(Validity, MatchesOracleOnRandomInstances) {
  util::Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.below(47);
    const std::size_t k = 2 + rng.below(4);
    auto pts = random_points(n, 2 + rng.below(4), rng);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < k ? static_cast<int>(i) : static_cast<int>(rng.below(k));
    if (trial % 3 == 0) labels[n - 1] = kNoise;
    auto m = oracle::to_matrix(pts);
    EXPECT_NEAR(clustering::silhouette(m, labels), oracle::silhouette(pts, labels), 1e-9);
    EXPECT_NEAR(clustering::davies_bouldin(m, labels), oracle::davies_bouldin(pts, labels), 1e-9);
  }
}

TEST(Validity, SingleClusterThrows) {
  auto m = oracle::to_matrix({{0, 0}, {1, 1}, {2, 2}});
  EXPECT_THROW(clustering::silhouette(m, {0, 0, kNoise}), Error);
  EXPECT_THROW(clustering::davies_bouldin(m, {0, 0, 0}), Error);
}

TEST(Hdbscan, RecoversThreeBlobs) {
  auto blobs = oracle::gaussian_blobs(40, 2, 0.05, 10.0, 3, 7);
  auto m = oracle::to_matrix(blobs.points);
  auto r = clustering::hdbscan(m, {20, 5});
  EXPECT_EQ(r.assignment.n_clusters, 3);
  EXPECT_GE(oracle::agreement(blobs.labels, r.assignment.labels), 0.95);
  std::size_t noise = 0;
  for (int l : r.assignment.labels) noise += l == kNoise;
  EXPECT_LE(noise, blobs.points.size() / 20);
  auto again = clustering::hdbscan(m, {20, 5});
  EXPECT_EQ(again.assignment.labels, r.assignment.labels);
  EXPECT_EQ(again.assignment.probabilities, r.assignment.probabilities);
}

TEST(Hdbscan, ProbabilitiesInRange) {
  auto blobs = oracle::gaussian_blobs(30, 3, 0.3, 6.0, 2, 11);
  auto r = clustering::hdbscan(oracle::to_matrix(blobs.points), {10, 5});
  for (std::size_t i = 0; i < r.assignment.size(); ++i) {
    if (r.assignment.labels[i] == kNoise) {
      EXPECT_EQ(r.assignment.probabilities[i], 0.0);
    } else {
      EXPECT_GT(r.assignment.probabilities[i], 0.0);
      EXPECT_LE(r.assignment.probabilities[i], 1.0);
    }
  }
}

TEST(Hdbscan, TooFewPointsIsAllNoiseOrError) {
  auto m = oracle::to_matrix({{0, 0}, {1, 1}, {2, 2}});
  try {
    auto r = clustering::hdbscan(m, {20, 5});
    EXPECT_EQ(r.assignment.n_clusters, 0);
  } catch (const Error&) {
    SUCCEED();
  }
}

TEST(Representatives, OrderedByProbabilityThenId) {
  ClusterAssignment a;
  a.labels = {0, 0, 0, 1, kNoise, 0};
  a.probabilities = {0.5, 0.9, 0.9, 1.0, 0.0, 0.7};
  a.n_clusters = 2;
  auto ids = std::vector<std::string>{"e", "c", "b", "x", "n", "a"};
  auto reps = clustering::select_representative_rows(a, ids, 3);
  EXPECT_EQ(reps[0], (std::vector<std::size_t>{2, 1, 5}));
  EXPECT_EQ(reps[1], (std::vector<std::size_t>{3}));
  EXPECT_EQ(reps.count(kNoise), 0u);
}

TEST(Assignment, CsvRoundTrip) {
  ClusterAssignment a;
  a.labels = {0, kNoise, 1};
  a.probabilities = {0.25, 0.0, 1.0};
  a.n_clusters = 2;
  auto ids = ids_for(3);
  auto back = clustering::assignment_from_csv(clustering::assignment_to_csv(a, ids), ids);
  EXPECT_EQ(back.labels, a.labels);
  EXPECT_EQ(back.probabilities, a.probabilities);
  EXPECT_EQ(back.n_clusters, 2);
  auto members = back.members();
  ASSERT_EQ(members.size(), 2u);
  EXPECT_EQ(members[1], (std::vector<std::size_t>{2}));
}
