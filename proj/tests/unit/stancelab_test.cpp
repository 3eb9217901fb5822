#include <gtest/gtest.h>

#include <cmath>

#include "themescope/stancelab.hpp"
#include "themescope/synthetic.hpp"
#include "support/oracles.hpp"

using namespace themescope;

namespace {

std::vector<Stance> labels_with(std::size_t pro, std::size_t energy, std::size_t neutral) {
  std::vector<Stance> out;
  for (std::size_t i = 0; i < pro; ++i) out.push_back(Stance::ProClimate);
  for (std::size_t i = 0; i < energy; ++i) out.push_back(Stance::ProEnergy);
  for (std::size_t i = 0; i < neutral; ++i) out.push_back(Stance::Neutral);
  return out;
}

SparseMatrix random_sparse(std::size_t n, std::size_t f, util::Rng& rng) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      if (rng.below(3) == 0) t.emplace_back(i, j, rng.normal());
  SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

TEST(Split, StratifiedCounts) {
  auto labels = labels_with(60, 30, 10);
  auto s = stance::stratified_split(labels, {});
  std::array<std::size_t, 3> test{}, val{}, train{};
  for (auto i : s.test) ++test[stance_index(labels[i])];
  for (auto i : s.val) ++val[stance_index(labels[i])];
  for (auto i : s.train) ++train[stance_index(labels[i])];
  EXPECT_EQ(test, (std::array<std::size_t, 3>{12, 6, 2}));
  EXPECT_EQ(val, (std::array<std::size_t, 3>{10, 5, 2}));
  EXPECT_EQ(train, (std::array<std::size_t, 3>{38, 19, 6}));
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), labels.size());
  EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
}

TEST(Split, SeedDeterministicAndProportional) {
  util::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto labels = labels_with(3 + rng.below(60), 3 + rng.below(60), 3 + rng.below(60));
    SplitSpec spec;
    spec.seed = trial;
    auto a = stance::stratified_split(labels, spec);
    auto b = stance::stratified_split(labels, spec);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.val, b.val);
    std::array<double, 3> total{}, in_test{};
    for (auto l : labels) ++total[stance_index(l)];
    for (auto i : a.test) ++in_test[stance_index(labels[i])];
    for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(in_test[c] - total[c] * spec.test_fraction), 1.0);
  }
  SplitSpec other;
  other.seed = 99;
  auto labels = labels_with(40, 40, 40);
  EXPECT_NE(stance::stratified_split(labels, {}).test, stance::stratified_split(labels, other).test);
  EXPECT_THROW(stance::stratified_split({}, {}), Error);
}

TEST(Tfidf, SmoothedIdfAndL2Rows) {
  auto [space, X] = stance::tfidf_fit_transform({"solar wind", "solar", "coal"}, {1, 1});
  ASSERT_EQ(space.n_features(), 3u);
  const auto& vocab = space.vocabulary();
  EXPECT_NEAR(space.idf()[vocab.at("wind")], std::log(4.0 / 2.0) + 1.0, 1e-12);
  EXPECT_NEAR(space.idf()[vocab.at("solar")], std::log(4.0 / 3.0) + 1.0, 1e-12);
  for (Eigen::Index r = 0; r < X.rows(); ++r) EXPECT_NEAR(X.row(r).norm(), 1.0, 1e-12);
  auto unseen = space.transform({"tidal power"});
  EXPECT_EQ(unseen.nonZeros(), 0);
}

TEST(Tfidf, Ngrams) {
  EXPECT_EQ(stance::ngrams("clean solar power", {1, 2}),
            (std::vector<std::string>{"clean", "solar", "power", "clean solar", "solar power"}));
  EXPECT_EQ(stance::ngrams("clean solar power", {2, 3}),
            (std::vector<std::string>{"clean solar", "solar power", "clean solar power"}));
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
  util::Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 12, f = 6;
    auto X = random_sparse(n, f, rng);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng.below(3);
    Eigen::MatrixXd W(3, f);
    Eigen::VectorXd b(3);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.normal() * 0.5;
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal() * 0.5;
    const double C = 0.7;
    Eigen::MatrixXd gW;
    Eigen::VectorXd gb;
    stance::logreg_objective(X, y, W, b, C, &gW, &gb);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < W.size(); ++i) {
      Eigen::MatrixXd Wp = W, Wm = W;
      Wp.data()[i] += h;
      Wm.data()[i] -= h;
      double fd = (stance::logreg_objective(X, y, Wp, b, C) - stance::logreg_objective(X, y, Wm, b, C)) / (2 * h);
      EXPECT_LE(std::abs(fd - gW.data()[i]), 1e-5 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      Eigen::VectorXd bp = b, bm = b;
      bp(i) += h;
      bm(i) -= h;
      double fd = (stance::logreg_objective(X, y, W, bp, C) - stance::logreg_objective(X, y, W, bm, C)) / (2 * h);
      EXPECT_LE(std::abs(fd - gb(i)), 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(LogReg, SeparableDataFitsPerfectlyAndObjectiveDecreases) {
  std::vector<std::string> texts;
  std::vector<Stance> labels;
  const char* words[] = {"renewables", "drilling", "weather"};
  for (int i = 0; i < 30; ++i) {
    texts.push_back(std::string(words[i % 3]) + " filler" + std::to_string(i));
    labels.push_back(static_cast<Stance>(i % 3));
  }
  auto [space, X] = stance::tfidf_fit_transform(texts, {1, 1});
  auto clf = stance::logreg_train(X, labels, {10.0, 500, 1e-9});
  auto m = stance::stance_evaluate(clf, X, labels);
  EXPECT_EQ(m.accuracy, 1.0);
  for (std::size_t i = 1; i < clf.objective_trace.size(); ++i)
    EXPECT_LE(clf.objective_trace[i], clf.objective_trace[i - 1]);
}

TEST(LogReg, RejectsSingleClass) {
  auto [space, X] = stance::tfidf_fit_transform({"a solar", "b solar"}, {1, 1});
  EXPECT_THROW(stance::logreg_train(X, {Stance::Neutral, Stance::Neutral}, {}), Error);
}

TEST(Metrics, ConfusionAndMacroF1) {
  std::vector<Stance> truth, pred;
  for (int i = 0; i < 5; ++i) {
    truth.push_back(Stance::ProClimate);
    pred.push_back(Stance::ProClimate);
  }
  for (int i = 0; i < 5; ++i) {
    truth.push_back(Stance::ProEnergy);
    pred.push_back(Stance::Neutral);
  }
  for (int i = 0; i < 5; ++i) {
    truth.push_back(Stance::Neutral);
    pred.push_back(Stance::Neutral);
  }
  auto m = stance::metrics_from_predictions(truth, pred);
  using Row = std::array<std::size_t, 3>;
  EXPECT_EQ(m.confusion[0], (Row{5, 0, 0}));
  EXPECT_EQ(m.confusion[1], (Row{0, 0, 5}));
  EXPECT_EQ(m.confusion[2], (Row{0, 0, 5}));
  EXPECT_NEAR(m.accuracy, 10.0 / 15.0, 1e-12);
  EXPECT_NEAR(m.macro_f1, (1.0 + 0.0 + 2.0 / 3.0) / 3.0, 1e-12);
}

TEST(Metrics, MacroF1MatchesOracle) {
  util::Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::array<std::size_t, 3>, 3> cm{};
    std::vector<std::vector<long>> ref(3, std::vector<long>(3));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ref[i][j] = static_cast<long>(cm[i][j] = rng.below(8));
    EXPECT_EQ(stance::macro_f1(cm), oracle::macro_f1(ref));
  }
}

TEST(Variants, ThemeDeterminesStance) {
  auto topics = synthetic::default_topics();
  auto tc = synthetic::make_topic_corpus(150, 5, topics);
  ThemeAssignment a;
  for (std::size_t i = 0; i < tc.corpus.size(); ++i) {
    a.ids.push_back(tc.corpus.documents[i].id);
    a.labels.push_back(topics[tc.topic_of[i]].label);
  }
  auto data = stance::build_labeled_set(tc.corpus, a, "PAID_ADS");
  ASSERT_EQ(data.labels.size(), 150u);
  auto results = stance::run_variants(data, {}, {}, {}, 2);
  ASSERT_EQ(results.size(), 3u);
  for (const auto& r : results) {
    if (r.variant == StanceVariant::Theme) EXPECT_EQ(r.test.accuracy, 1.0);
  }
  auto rows = stance::result_rows(results, "PAID_ADS");
  auto csv = stance::results_to_csv(rows, "fp");
  EXPECT_NE(csv.find("model,variant,platform,Acc,F1"), std::string::npos);
  EXPECT_NE(csv.find("LogReg,THM,PAID_ADS,1,1"), std::string::npos) << csv;
}

TEST(Variants, SkipsUnassignedDocuments) {
  auto topics = synthetic::default_topics();
  auto tc = synthetic::make_topic_corpus(9, 5, topics);
  ThemeAssignment a;
  for (std::size_t i = 0; i < tc.corpus.size(); ++i) {
    a.ids.push_back(tc.corpus.documents[i].id);
    a.labels.push_back(i == 0 ? std::nullopt : std::optional<std::string>(topics[tc.topic_of[i]].label));
  }
  auto data = stance::build_labeled_set(tc.corpus, a, "x");
  EXPECT_EQ(data.ids.size(), 8u);
}
