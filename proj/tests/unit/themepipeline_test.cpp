#include <gtest/gtest.h>

#include <filesystem>

#include "themescope/synthetic.hpp"
#include "themescope/themepipeline.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace themescope;

namespace {

// Scripted mock that can be told to fail one template.
class FlakyClient : public ChatClient {
 public:
  FlakyClient(MockChatClient& inner, std::string fail_on) : inner_(inner), fail_on_(std::move(fail_on)) {}
  std::string name() const override { return inner_.name(); }
  std::string complete(const ChatRequest& r) override {
    if (r.template_id == fail_on_) throw Error("service unavailable");
    return inner_.complete(r);
  }

 private:
  MockChatClient& inner_;
  std::string fail_on_;
};

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

const synthetic::TopicCorpus& small_corpus() {
  static const auto tc = synthetic::make_topic_corpus(300, 11, synthetic::default_topics());
  return tc;
}

MockChatClient scripted_client() {
  return MockChatClient(MockChatClient::script_from_json(synthetic::mock_script(small_corpus().topics)));
}

}  // namespace

TEST(Merge, GroupsMatchUnionFindOracleAcrossGrid) {
  auto g = fixture::merge_geometry();
  MergeConfig cfg;
  std::size_t prev = 0;
  for (auto it = cfg.tau_grid.rbegin(); it != cfg.tau_grid.rend(); ++it) {
    auto groups = pipeline::merge_redundant(g.summaries, *it);
    auto ref = oracle::components(g.similarity, *it);
    std::vector<int> got(4);
    for (std::size_t k = 0; k < groups.size(); ++k)
      for (auto r : groups[k]) got[r] = static_cast<int>(k);
    EXPECT_EQ(got, ref) << "tau " << *it;
    if (prev) EXPECT_LE(groups.size(), prev);
    prev = groups.size();
  }
}

TEST(Merge, TieRuleSelectsLargestTau) {
  auto g = fixture::merge_geometry();
  auto r = pipeline::tau_grid_search({}, g.summaries, g.reduced_docs, g.doc_cluster);
  ASSERT_TRUE(r.config.selected_tau);
  EXPECT_DOUBLE_EQ(*r.config.selected_tau, 0.85);
  EXPECT_EQ(r.scores.back().n_groups, 4u);
  for (std::size_t i = 0; i + 1 < r.scores.size(); ++i) EXPECT_EQ(r.scores[i].n_groups, 2u);
}

TEST(Merge, InvalidTauRejected) {
  auto g = fixture::merge_geometry();
  EXPECT_THROW(pipeline::merge_redundant(g.summaries, 1.0), Error);
  MergeConfig bad;
  bad.tau_grid = {0.9, 0.8};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Discovery, ThreeTopicsRecoveredAndAssigned) {
  const auto& tc = small_corpus();
  HashingProvider emb;
  auto client = scripted_client();
  Gateway gw(client);
  auto res = pipeline::run_discovery(tc.corpus, {emb, gw}, {});
  ASSERT_EQ(res.model.clusters.size(), 3u);
  auto a = pipeline::assign_corpus(tc.corpus, res.model, AssignStrategy::SummaryMediated, gw);
  ASSERT_EQ(a.ids.size(), tc.corpus.size());
  std::map<std::string, std::map<int, int>> table;
  for (std::size_t i = 0; i < a.ids.size(); ++i)
    if (a.labels[i]) table[*a.labels[i]][tc.topic_of[i]]++;
  for (const auto& [label, row] : table) {
    int total = 0, best = 0;
    for (const auto& [t, n] : row) {
      total += n;
      best = std::max(best, n);
    }
    EXPECT_GE(static_cast<double>(best) / total, 0.95) << label;
  }
  auto direct = pipeline::assign_corpus(tc.corpus, res.model, AssignStrategy::DirectTheme, gw);
  EXPECT_EQ(direct.strategy, AssignStrategy::DirectTheme);
  auto back = ThemeAssignment::from_csv(a.to_csv());
  EXPECT_EQ(back.labels, a.labels);
  EXPECT_EQ(ThemeModel::from_json(res.model.to_json()).serialize(), res.model.serialize());
}

TEST(Discovery, ResumeRecomputesOnlyLaterStages) {
  const auto& tc = small_corpus();
  HashingProvider emb;
  auto client = scripted_client();
  Gateway gw(client);
  auto full = pipeline::run_discovery(tc.corpus, {emb, gw}, {});

  TempDir dir("themescope-resume-test");
  DiscoveryOptions opts;
  opts.run_dir = dir.path;
  opts.stop_after = "coherency";
  auto partial = pipeline::run_discovery(tc.corpus, {emb, gw}, {}, opts);
  EXPECT_TRUE(partial.stopped_early);
  opts.stop_after.reset();
  opts.resume = true;
  auto resumed = pipeline::run_discovery(tc.corpus, {emb, gw}, {}, opts);
  EXPECT_EQ(resumed.resumed_stages,
            (std::vector<std::string>{"embed", "project", "cluster", "represent", "coherency"}));
  EXPECT_EQ(resumed.computed_stages, (std::vector<std::string>{"summarize", "merge", "label"}));
  EXPECT_EQ(resumed.model.serialize(), full.model.serialize());
}

TEST(Discovery, FailureNamesTheStage) {
  const auto& tc = small_corpus();
  HashingProvider emb;
  auto inner = scripted_client();
  FlakyClient flaky(inner, prompts::kSummarize);
  Gateway gw(flaky);
  TempDir dir("themescope-fail-test");
  DiscoveryOptions opts;
  opts.run_dir = dir.path;
  try {
    pipeline::run_discovery(tc.corpus, {emb, gw}, {}, opts);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "summarize");
  }
  // Completed stages survive and are reused by a resumed run.
  auto client = scripted_client();
  Gateway ok(client);
  opts.resume = true;
  auto resumed = pipeline::run_discovery(tc.corpus, {emb, ok}, {}, opts);
  EXPECT_EQ(resumed.resumed_stages.size(), 5u);
}

TEST(Discovery, FingerprintTracksConfig) {
  HashingProvider emb;
  auto client = scripted_client();
  Gateway gw(client);
  DiscoveryConfig a, b;
  b.hdbscan.min_cluster_size = 25;
  EXPECT_NE(pipeline::config_fingerprint(a, emb, gw), pipeline::config_fingerprint(b, emb, gw));
  EXPECT_EQ(pipeline::config_fingerprint(a, emb, gw), pipeline::config_fingerprint(a, emb, gw));
}
