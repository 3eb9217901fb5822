#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "themescope/clustering.hpp"
#include "themescope/corpus.hpp"

namespace themescope {

struct StopwordList {
  std::vector<std::string> words;  // case-folded, sorted, unique
  std::string version;

  bool contains(const std::string& w) const;
};

struct TokenizedCorpus {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> docs;  // vocabulary indices
  std::vector<std::string> vocabulary;
  std::unordered_map<std::string, int> index;
  std::vector<bool> empty;  // true when nothing survived filtering

  std::size_t n_tokens() const;
};

struct LdaModel {
  std::size_t K = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::vector<std::string> vocabulary;
  std::vector<std::string> doc_ids;
  std::vector<std::vector<int>> topic_word;  // K x V
  std::vector<std::vector<int>> doc_topic;   // N x K
  std::vector<int> topic_totals;             // K
  std::vector<std::vector<int>> assignments;  // per token topic

  std::size_t V() const { return vocabulary.size(); }
  std::vector<double> doc_posterior(std::size_t doc) const;
  double word_probability(std::size_t topic, std::size_t word) const;
};

struct TopicKeywords {
  int topic = 0;
  std::vector<std::string> keywords;
};

struct LdaParams {
  std::size_t K = 50;
  std::optional<double> alpha;  // defaults to 50 / K
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 7;
};

namespace baselines {

StopwordList load_stopwords(const std::filesystem::path& path);
StopwordList make_stopwords(std::vector<std::string> words, std::string version);

// Case-folds, drops URLs, splits on anything that is not a letter or digit,
// removes stopwords, single characters and pure numbers.
std::vector<std::string> tokenize_text(std::string_view text, const StopwordList& stopwords);
TokenizedCorpus tokenize(const Corpus& corpus, const StopwordList& stopwords);

// Called after every sweep with the 1-based sweep number.
using SweepObserver = std::function<void(std::size_t, const LdaModel&)>;

LdaModel lda_fit(const TokenizedCorpus& tc, const LdaParams& params, const SweepObserver& observer = {});

TopicKeywords lda_assign_keywords(const LdaModel& model, std::size_t doc, std::size_t top_n = 5);
std::vector<std::string> lda_topic_keywords(const LdaModel& model, std::size_t topic, std::size_t top_n);

struct ScoredTerm {
  std::string term;
  double score = 0.0;
};

// Keywords per non-noise class, scored tf(t,c) * ln(1 + A / f(t)).
std::map<int, std::vector<ScoredTerm>> ctfidf_keywords(const std::vector<int>& labels, const TokenizedCorpus& tc,
                                                       std::size_t top_n = 10);

inline constexpr const char* kOutlier = "outlier";

struct DocKeywords {
  std::string id;
  std::string method;
  std::vector<std::string> keywords;  // {"outlier"} for noise documents
};

std::vector<DocKeywords> lda_document_keywords(const LdaModel& model, std::size_t top_n = 5);
std::vector<DocKeywords> ctfidf_document_keywords(const std::vector<int>& labels, const TokenizedCorpus& tc,
                                                  std::size_t top_n = 10);

// doc_id,method,keywords with keywords joined by "|".
std::string keywords_to_csv(const std::vector<DocKeywords>& rows, const std::string& fingerprint);
std::vector<DocKeywords> keywords_from_csv(std::string_view text);

}  // namespace baselines
}  // namespace themescope
