#include <gtest/gtest.h>

#include <atomic>

#include "themescope/llmgateway.hpp"
#include "support/golden_prompts.hpp"

using namespace themescope;

TEST(Prompts, RenderMatchesGoldenFiles) {
  auto seen = golden::capture_prompts();
  EXPECT_EQ(seen.size(), prompts::ids().size());
  for (const auto& [id, prompt] : seen) {
    auto path = golden::dir() / (id + ".txt");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(prompt, golden::read_file(path)) << id;
  }
}

TEST(Prompts, MissingSlotThrows) {
  PromptTemplate t("x", "v1", "Hello {{name}} from {{place}}");
  EXPECT_EQ(t.slots(), (std::vector<std::string>{"name", "place"}));
  EXPECT_EQ(t.render({{"name", "A"}, {"place", "B"}}), "Hello A from B");
  EXPECT_THROW(t.render({{"name", "A"}}), Error);
}

TEST(Prompts, VersionsFingerprintListsEveryTemplate) {
  auto fp = prompts::versions_fingerprint();
  for (const auto& id : prompts::ids()) EXPECT_NE(fp.find(id + "@v1"), std::string::npos) << id;
}

TEST(Parse, Coherency) {
  auto a = parse::coherency("Cluster Coherency: Incoherent\nReasoning: labels differ.");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->verdict, Coherency::Incoherent);
  EXPECT_EQ(a->reasoning, "labels differ.");
  auto b = parse::coherency("cluster coherency: COHERENT");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->verdict, Coherency::Coherent);
  EXPECT_FALSE(parse::coherency("I cannot tell."));
}

TEST(Parse, Judgment) {
  EXPECT_EQ(parse::judgment("Correct. It matches."), std::optional<bool>(true));
  EXPECT_EQ(parse::judgment("Incorrect, the text is about rain."), std::optional<bool>(false));
  EXPECT_EQ(parse::judgment("No."), std::optional<bool>(false));
  EXPECT_EQ(parse::judgment("Yes, but no further detail."), std::optional<bool>(true));
  EXPECT_FALSE(parse::judgment("Unsure."));
}

TEST(Parse, Stance) {
  EXPECT_EQ(parse::stance("Pro-Climate"), Stance::ProClimate);
  EXPECT_EQ(parse::stance("stance: pro energy"), Stance::ProEnergy);
  EXPECT_EQ(parse::stance("Neutral, not pro-climate"), Stance::Neutral);
  EXPECT_FALSE(parse::stance("Against"));
}

TEST(Parse, CleanLabel) {
  EXPECT_EQ(parse::clean_label("Theme label: \"Solar savings\".\nExtra line"), "Solar savings");
  EXPECT_EQ(parse::clean_label("  'Ocean conservation'  "), "Ocean conservation");
  EXPECT_EQ(parse::clean_label("**Climate rollbacks**"), "Climate rollbacks");
}

TEST(Parse, AssignmentStrict) {
  const std::vector<std::string> cands{"Solar savings", "Drilling opposition"};
  auto ok = parse::assignment("1: solar savings\n2: \"Drilling opposition\"\n3: UNASSIGNED", 3, cands);
  ASSERT_TRUE(ok);
  EXPECT_EQ(*ok, (std::vector<int>{0, 1, kUnassigned}));
  auto out_of_set = parse::assignment("1: Wildfire smoke\n2: Solar savings", 2, cands);
  ASSERT_TRUE(out_of_set);
  EXPECT_EQ(*out_of_set, (std::vector<int>{kUnassigned, 0}));
  EXPECT_FALSE(parse::assignment("1: Solar savings", 2, cands));
  EXPECT_FALSE(parse::assignment("1: Solar savings\n1: Solar savings", 2, cands));
  EXPECT_FALSE(parse::assignment("1: Solar savings\n3: Solar savings", 2, cands));
}

TEST(Parse, TruncateWords) {
  EXPECT_EQ(parse::truncate_words("One two. Three four five.", 4), "One two.");
  EXPECT_EQ(parse::truncate_words("one two three four five", 3), "one two three");
  EXPECT_EQ(parse::truncate_words("short", 3), "short");
}

TEST(Gateway, BatchLengthUnderFuzzedResponses) {
  util::Rng rng(99);
  const std::vector<std::string> cands{"Solar savings", "Drilling opposition", "Ocean plastic"};
  const std::vector<std::string> junk{"", "UNASSIGNED", "???", "1: Solar savings", "Solar savings",
                                      "7: Ocean plastic", "2) Drilling opposition", "Text 3: unknown theme"};
  MockChatClient client([&](const ChatRequest&) {
    std::string out;
    const auto lines = 1 + rng.below(12);
    for (std::size_t i = 0; i < lines; ++i) {
      if (rng.below(2)) {
        out += std::to_string(1 + rng.below(10)) + ": " + (rng.below(3) ? cands[rng.below(3)] : junk[rng.below(junk.size())]);
      } else {
        out += junk[rng.below(junk.size())];
      }
      out += "\n";
    }
    return out;
  });
  GatewayOptions opts;
  opts.cache_responses = false;
  opts.max_in_flight = 1;
  Gateway gw(client, opts);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> texts;
    const auto n = 1 + rng.below(Gateway::kBatchSize);
    for (std::size_t i = 0; i < n; ++i) texts.push_back("text " + std::to_string(i));
    auto r = gw.assign_batch(texts, cands, trial % 2 ? AssignMode::Theme : AssignMode::Summary);
    ASSERT_EQ(r.choices.size(), texts.size());
    for (int c : r.choices) EXPECT_TRUE(c == kUnassigned || (c >= 0 && c < 3));
  }
}

TEST(Gateway, OutOfCandidateBecomesUnassigned) {
  MockChatClient client([](const ChatRequest&) { return std::string("1: Wildfire smoke\n2: Solar savings"); });
  Gateway gw(client);
  auto r = gw.assign_batch({"a", "b"}, {"Solar savings"}, AssignMode::Theme);
  EXPECT_FALSE(r.batch_failed);
  EXPECT_EQ(r.choices, (std::vector<int>{kUnassigned, 0}));
}

TEST(Gateway, RetriesThenMarksBatchFailed) {
  std::atomic<int> calls{0};
  MockChatClient client([&](const ChatRequest&) {
    ++calls;
    return std::string("no idea");
  });
  Gateway gw(client);
  auto r = gw.assign_batch({"a", "b"}, {"Solar savings"}, AssignMode::Summary);
  EXPECT_TRUE(r.batch_failed);
  EXPECT_EQ(r.choices, (std::vector<int>{kUnassigned, kUnassigned}));
  EXPECT_EQ(calls.load(), 3);
}

TEST(Gateway, Preconditions) {
  MockChatClient client([](const ChatRequest&) { return std::string("Coherent"); });
  Gateway gw(client);
  EXPECT_THROW(gw.check_coherency({}), PreconditionError);
  EXPECT_THROW(gw.summarize_cluster({"a", "b", "c", "d", "e", "f"}), PreconditionError);
  EXPECT_THROW(gw.assign_batch({"a"}, {}, AssignMode::Theme), PreconditionError);
  std::vector<std::string> eleven(11, "x");
  EXPECT_THROW(gw.assign_batch(eleven, {"c"}, AssignMode::Theme), PreconditionError);
  EXPECT_THROW(gw.predict_stance_llm(std::nullopt, std::nullopt, StanceVariant::Text), PreconditionError);
}

TEST(Gateway, LongSummaryIsShortened) {
  std::string long_text;
  for (int i = 0; i < 30; ++i) long_text += "This sentence has five words. ";
  MockChatClient client([&](const ChatRequest&) { return long_text; });
  Gateway gw(client);
  auto s = gw.summarize_cluster({"solar"});
  EXPECT_LE(util::word_count(s), 100u);
  EXPECT_EQ(s.back(), '.');
}

TEST(Gateway, LabelTooLongThrowsAfterRetry) {
  MockChatClient client([](const ChatRequest&) { return std::string("A very long label that keeps going"); });
  Gateway gw(client);
  EXPECT_THROW(gw.label_theme("summary"), ParseError);
}

TEST(Gateway, CachesParsedResponses) {
  std::atomic<int> calls{0};
  MockChatClient client([&](const ChatRequest&) {
    ++calls;
    return std::string("Correct");
  });
  Gateway gw(client);
  gw.judge_assignment("text", "Solar savings");
  gw.judge_assignment("text", "Solar savings");
  EXPECT_EQ(calls.load(), 1);
}

TEST(MockClient, ScriptResolutionOrder) {
  MockChatClient::Script s;
  s.rules.push_back({"zebra", "Cluster Coherency: Incoherent"});
  s.topics.push_back({{"solar"}, "Ads promote solar.", "Solar savings", Stance::ProClimate});
  s.default_response = "Cluster Coherency: Coherent";
  MockChatClient client(s);
  Gateway gw(client);
  EXPECT_EQ(gw.check_coherency({"zebra crossing"}).verdict, Coherency::Incoherent);
  EXPECT_EQ(gw.label_theme("Ads promote solar."), "Solar savings");
}
