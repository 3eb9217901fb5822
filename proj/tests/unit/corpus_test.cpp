#include <gtest/gtest.h>

#include <filesystem>

#include "themescope/corpus.hpp"
#include "themescope/embedding.hpp"
#include "support/oracles.hpp"

using namespace themescope;

namespace {

Document doc(std::string id, std::string date, std::string text = "solar energy", Platform p = Platform::PaidAds) {
  Document d;
  d.id = std::move(id);
  d.platform = p;
  d.text = std::move(text);
  d.timestamp = util::parse_iso8601(date + "T12:00:00Z");
  return d;
}

Corpus corpus_of(std::vector<Document> docs) {
  Corpus c;
  c.source_name = "test";
  c.documents = std::move(docs);
  return c;
}

VectorSet vectors_for(const Corpus& c, const std::vector<std::vector<double>>& rows) {
  std::vector<std::string> ids;
  for (const auto& d : c.documents) ids.push_back(d.id);
  return VectorSet(ids, oracle::to_matrix(rows), "test");
}

std::vector<std::string> ids(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& d : c.documents) out.push_back(d.id);
  return out;
}

}  // namespace

TEST(CorpusLoad, EmptyJsonlGivesEmptyCorpus) {
  auto c = corpus::parse_jsonl("", "empty.jsonl");
  EXPECT_EQ(c.size(), 0u);
}

TEST(CorpusLoad, ThreeRowsSortedByTimestampThenId) {
  const char* text =
      R"({"id":"b","platform":"PAID_ADS","text":"x","timestamp":"2024-11-02T00:00:00Z"})"
      "\n"
      R"({"id":"c","platform":"PUBLIC_POSTS","text":"y","timestamp":"2024-11-01T00:00:00Z"})"
      "\n"
      R"({"id":"a","platform":"PAID_ADS","text":"z","timestamp":"2024-11-02T00:00:00Z"})"
      "\n";
  auto c = corpus::parse_jsonl(text, "three.jsonl");
  corpus::validate_and_sort(c);
  EXPECT_EQ(ids(c), (std::vector<std::string>{"c", "a", "b"}));
}

TEST(CorpusLoad, InvertedImpressionsNameTheField) {
  const char* text =
      R"({"id":"a","platform":"PAID_ADS","text":"x","timestamp":"2024-11-02T00:00:00Z","impressions_low":100,"impressions_high":50})";
  try {
    corpus::parse_jsonl(text, "bad.jsonl");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "impressions");
    EXPECT_EQ(e.record(), std::optional<std::size_t>(0));
  }
}

TEST(CorpusLoad, BlankTextAndBadTimestampRejected) {
  EXPECT_THROW(corpus::parse_jsonl(R"({"id":"a","platform":"PAID_ADS","text":"   ","timestamp":"2024-11-02T00:00:00Z"})",
                                   "t"),
               ValidationError);
  EXPECT_THROW(corpus::parse_jsonl(R"({"id":"a","platform":"PAID_ADS","text":"x","timestamp":"yesterday"})", "t"),
               ValidationError);
}

TEST(CorpusLoad, DuplicateIdNamed) {
  auto c = corpus_of({doc("dup", "2024-11-01"), doc("dup", "2024-11-02")});
  try {
    corpus::validate_and_sort(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
  }
}

TEST(CorpusLoad, CsvRangesAndOptionalBounds) {
  const char* text =
      "id,platform,text,timestamp,advertiser,impressions_low,impressions_high,spend_low,spend_high,stance\n"
      "a,PAID_ADS,\"Go solar, save\",2024-11-01T10:00:00Z,Acme,1000,1999,100,199,PRO_CLIMATE\n"
      "b,PUBLIC_POSTS,rain today,2024-11-02T10:00:00Z,,,,,,\n";
  auto c = corpus::parse_csv(text, "x.csv");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.documents[0].text, "Go solar, save");
  EXPECT_EQ(*c.documents[0].impressions_high, 1999u);
  EXPECT_EQ(*c.documents[0].stance, Stance::ProClimate);
  EXPECT_FALSE(c.documents[1].spend_low.has_value());
  EXPECT_FALSE(c.documents[1].advertiser.has_value());
}

TEST(CorpusLoad, JsonlRoundTrip) {
  auto d = doc("a", "2024-11-01", "wind power");
  d.spend_low = 100;
  d.spend_high = 199;
  d.stance = Stance::Neutral;
  auto c = corpus_of({d});
  auto back = corpus::parse_jsonl(corpus::to_jsonl(c), "rt");
  EXPECT_EQ(corpus::to_jsonl(back), corpus::to_jsonl(c));
}

TEST(Keywords, BundledListMatchesSolarEnergy) {
  auto kw = corpus::load_keywords(std::filesystem::path(THEMESCOPE_SOURCE_DIR) / "data/climate_keywords.v1.txt");
  EXPECT_EQ(kw.version, "climate-keywords-v1");
  auto c = corpus_of({doc("a", "2024-11-01", "Invest in solar energy today"), doc("b", "2024-11-01", "I like cats")});
  auto f = corpus::filter_by_keywords(c, kw);
  EXPECT_EQ(ids(f), (std::vector<std::string>{"a"}));
  EXPECT_EQ(f.keyword_list_version, "climate-keywords-v1");
}

TEST(Keywords, CaseInsensitiveAndOrderPreserving) {
  auto kw = corpus::make_keywords({"coal mining", "wind"}, "t1");
  auto c = corpus_of({doc("a", "2024-11-01", "Coal Mining jobs"), doc("b", "2024-11-02", "nothing"),
                      doc("c", "2024-11-03", "WIND farms")});
  EXPECT_EQ(ids(corpus::filter_by_keywords(c, kw)), (std::vector<std::string>{"a", "c"}));
}

TEST(Keywords, EmptyOrDuplicateListRejected) {
  EXPECT_THROW(corpus::make_keywords({}, "v"), Error);
  EXPECT_THROW(corpus::make_keywords({"Solar", "solar"}, "v"), Error);
}

TEST(Dedup, ExactDuplicateKeepsEarlier) {
  auto c = corpus_of({doc("a", "2024-11-01"), doc("b", "2024-11-02")});
  auto v = vectors_for(c, {{1, 0}, {1, 0}});
  EXPECT_EQ(ids(corpus::deduplicate(c, v, 0.8)), (std::vector<std::string>{"a"}));
}

TEST(Dedup, DissimilarCorpusUnchanged) {
  auto c = corpus_of({doc("a", "2024-11-01"), doc("b", "2024-11-02"), doc("c", "2024-11-03")});
  auto v = vectors_for(c, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_EQ(ids(corpus::deduplicate(c, v, 0.8)).size(), 3u);
}

TEST(Dedup, GreedyHandFixture) {
  // sims (1,2)=0.9, (1,3)=0.5, (2,3)=0.5 realised by explicit unit vectors.
  const double s = std::sqrt(1 - 0.81);
  const double y3 = (0.5 - 0.9 * 0.5) / s;
  auto c = corpus_of({doc("d1", "2024-11-01"), doc("d2", "2024-11-02"), doc("d3", "2024-11-03")});
  auto v = vectors_for(c, {{1, 0, 0}, {0.9, s, 0}, {0.5, y3, std::sqrt(1 - 0.25 - y3 * y3)}});
  EXPECT_EQ(ids(corpus::deduplicate(c, v, 0.8)), (std::vector<std::string>{"d1", "d3"}));
}

TEST(Dedup, MisalignedVectorsRejected) {
  auto c = corpus_of({doc("a", "2024-11-01"), doc("b", "2024-11-02")});
  VectorSet v({"b", "a"}, oracle::to_matrix({{1, 0}, {0, 1}}), "t");
  EXPECT_THROW(corpus::deduplicate(c, v, 0.8), Error);
}

TEST(Dedup, IdempotentAndMonotoneOnRandomCorpora) {
  util::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Document> docs;
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 30; ++i) {
      docs.push_back(doc("d" + std::to_string(100 + i), "2024-11-01"));
      rows.push_back({rng.uniform(), rng.uniform(), rng.uniform(0.0, 0.3)});
    }
    auto c = corpus_of(docs);
    auto v = vectors_for(c, rows);
    std::size_t prev = c.size() + 1;
    for (double tau : {0.9, 0.8, 0.7}) {
      auto once = corpus::deduplicate(c, v, tau);
      std::vector<std::size_t> kept;
      for (std::size_t i = 0; i < c.size(); ++i)
        for (const auto& d : once.documents)
          if (d.id == c.documents[i].id) kept.push_back(i);
      auto twice = corpus::deduplicate(once, v.select(kept), tau);
      EXPECT_EQ(ids(twice), ids(once));
      EXPECT_LE(once.size(), prev);
      prev = once.size();
    }
  }
}

TEST(WindowSplit, BoundariesFollowTheExclusionRule) {
  auto c = corpus_of({doc("in-before", "2024-11-03"), doc("edge-before", "2024-11-02"),
                      doc("too-early", "2024-11-01"), doc("event-day", "2024-11-05"), doc("in-after", "2024-11-08"),
                      doc("too-late", "2024-11-09")});
  auto s = corpus::window_split(c, util::parse_date("2024-11-05"), 3);
  EXPECT_EQ(ids(s.before), (std::vector<std::string>{"in-before", "edge-before"}));
  EXPECT_EQ(ids(s.after), (std::vector<std::string>{"in-after"}));
  EXPECT_THROW(corpus::window_split(c, util::parse_date("2024-11-05"), 0), Error);
}
