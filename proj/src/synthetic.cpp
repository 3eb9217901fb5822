#include "themescope/synthetic.hpp"

#include <chrono>

#include "themescope/util.hpp"

namespace themescope::synthetic {

std::vector<Topic> default_topics() {
  return {
      {"solar",
       {"solar", "rooftop", "panels", "sunshine", "photovoltaic", "installer", "inverter", "kilowatt",
        "homeowners", "savings", "rebate", "battery", "net-metering", "sunny", "array", "shingles",
        "daylight", "quote", "warranty", "efficiency"},
       "Ads urge homeowners to install rooftop solar panels for lower bills.",
       "Rooftop solar savings",
       Stance::ProClimate},
      {"drilling",
       {"drilling", "crude", "pipeline", "refinery", "barrels", "petroleum", "wellhead", "fracking",
        "diesel", "gasoline", "rigs", "permian", "shale", "roughnecks", "upstream", "tanker",
        "derrick", "exports", "lng", "throughput"},
       "Posts champion expanded crude drilling and pipeline construction.",
       "Drilling expansion",
       Stance::ProEnergy},
      {"weather",
       {"forecast", "humidity", "drizzle", "barometer", "meteorologist", "breezy", "overcast", "fog",
        "thermometer", "radar", "hail", "gusts", "dewpoint", "cloudy", "mild", "chilly",
        "umbrella", "showers", "visibility", "almanac"},
       "Updates describe routine local weather forecasts and conditions.",
       "Local forecasts",
       Stance::Neutral},
  };
}

TopicCorpus make_topic_corpus(std::size_t n_docs, std::uint64_t seed, const std::vector<Topic>& topics,
                              std::size_t min_words, std::size_t max_words) {
  if (topics.empty()) throw Error("synthetic corpus needs at least one topic");
  if (min_words == 0 || max_words < min_words) throw Error("synthetic corpus: bad word range");
  util::Rng rng(seed);
  TopicCorpus out;
  out.topics = topics;
  out.corpus.source_name = "synthetic-" + std::to_string(seed);
  const auto start = util::parse_iso8601("2024-10-01T00:00:00Z");
  for (std::size_t i = 0; i < n_docs; ++i) {
    const std::size_t t = i % topics.size();
    const auto& vocab = topics[t].vocabulary;
    std::size_t len = min_words + rng.below(max_words - min_words + 1);
    std::vector<std::string> words;
    for (std::size_t w = 0; w < len; ++w) words.push_back(vocab[rng.below(vocab.size())]);
    Document d;
    char id[32];
    std::snprintf(id, sizeof id, "doc-%05zu", i);
    d.id = id;
    d.platform = ((i / topics.size()) % 2 == 0) ? Platform::PaidAds : Platform::PublicPosts;
    d.text = util::join(words, " ");
    d.timestamp = start + std::chrono::hours(6 * static_cast<long>(i));
    d.stance = topics[t].stance;
    if (d.platform == Platform::PaidAds) {
      std::uint64_t lo = 1000 * (1 + rng.below(50));
      d.impressions_low = lo;
      d.impressions_high = lo + 999;
      double s = 100.0 * static_cast<double>(1 + rng.below(20));
      d.spend_low = s;
      d.spend_high = s + 99.0;
    }
    out.corpus.documents.push_back(std::move(d));
    out.topic_of.push_back(static_cast<int>(t));
  }
  return out;
}

nlohmann::json mock_script(const std::vector<Topic>& topics) {
  nlohmann::json j;
  j["topics"] = nlohmann::json::array();
  for (const auto& t : topics) {
    j["topics"].push_back({{"keywords", t.vocabulary},
                           {"summary", t.summary},
                           {"label", t.label},
                           {"stance", std::string(to_string(t.stance))}});
  }
  j["default"] = "";
  return j;
}

}  // namespace themescope::synthetic
