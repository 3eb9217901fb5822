#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "themescope/corpus.hpp"

namespace themescope::synthetic {

// A generating topic: documents draw words only from `vocabulary`.
struct Topic {
  std::string name;
  std::vector<std::string> vocabulary;
  std::string summary;
  std::string label;
  Stance stance = Stance::Neutral;
};

// Three topics with pairwise disjoint vocabularies (no word is a substring of
// a word in another topic).
std::vector<Topic> default_topics();

struct TopicCorpus {
  Corpus corpus;
  std::vector<int> topic_of;  // generating topic per document
  std::vector<Topic> topics;
};

// Document i belongs to topic i % topics.size(); platforms alternate per
// round; timestamps step 6 hours from 2024-10-01.
TopicCorpus make_topic_corpus(std::size_t n_docs, std::uint64_t seed, const std::vector<Topic>& topics,
                              std::size_t min_words = 12, std::size_t max_words = 20);

// Mock chat script whose topic rules answer every gateway role for these
// topics.
nlohmann::json mock_script(const std::vector<Topic>& topics);

}  // namespace themescope::synthetic
