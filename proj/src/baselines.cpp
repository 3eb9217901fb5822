#include "themescope/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

namespace themescope {

bool StopwordList::contains(const std::string& w) const { return std::binary_search(words.begin(), words.end(), w); }

std::size_t TokenizedCorpus::n_tokens() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

std::vector<double> LdaModel::doc_posterior(std::size_t doc) const {
  const auto& counts = doc_topic.at(doc);
  double len = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> p(K);
  for (std::size_t k = 0; k < K; ++k) p[k] = (counts[k] + alpha) / (len + static_cast<double>(K) * alpha);
  return p;
}

double LdaModel::word_probability(std::size_t topic, std::size_t word) const {
  return (topic_word.at(topic).at(word) + beta) / (topic_totals.at(topic) + static_cast<double>(V()) * beta);
}

namespace baselines {

StopwordList make_stopwords(std::vector<std::string> words, std::string version) {
  StopwordList s;
  for (auto& w : words) {
    auto t = util::casefold(util::trim(w));
    if (!t.empty()) s.words.push_back(std::move(t));
  }
  std::sort(s.words.begin(), s.words.end());
  s.words.erase(std::unique(s.words.begin(), s.words.end()), s.words.end());
  s.version = std::move(version);
  return s;
}

StopwordList load_stopwords(const std::filesystem::path& path) {
  std::vector<std::string> words;
  std::string version = path.filename().string();
  for (const auto& raw : util::split(util::read_file(path), '\n')) {
    auto line = util::trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      static const std::string tag = "# version:";
      if (line.rfind(tag, 0) == 0) version = util::trim(line.substr(tag.size()));
      continue;
    }
    words.push_back(line);
  }
  if (words.empty()) throw Error("stopword list is empty: " + path.string());
  return make_stopwords(std::move(words), version);
}

std::vector<std::string> tokenize_text(std::string_view text, const StopwordList& stopwords) {
  static const std::regex url_re(R"((https?://|www\.)\S+)", std::regex::icase);
  std::string no_urls = std::regex_replace(std::string(text), url_re, " ");
  std::vector<std::string> out;
  for (auto& tok : util::word_tokens(no_urls)) {
    if (tok.size() < 2) continue;
    if (std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    if (stopwords.contains(tok)) continue;
    out.push_back(std::move(tok));
  }
  return out;
}

TokenizedCorpus tokenize(const Corpus& corpus, const StopwordList& stopwords) {
  TokenizedCorpus tc;
  for (const auto& d : corpus.documents) {
    tc.ids.push_back(d.id);
    std::vector<int> doc;
    for (const auto& tok : tokenize_text(d.text, stopwords)) {
      auto [it, fresh] = tc.index.emplace(tok, static_cast<int>(tc.vocabulary.size()));
      if (fresh) tc.vocabulary.push_back(tok);
      doc.push_back(it->second);
    }
    tc.empty.push_back(doc.empty());
    tc.docs.push_back(std::move(doc));
  }
  return tc;
}

// ---- LDA ---------------------------------------------------------------------

LdaModel lda_fit(const TokenizedCorpus& tc, const LdaParams& params, const SweepObserver& observer) {
  if (params.K < 1) throw Error("LDA needs K >= 1");
  if (params.beta <= 0.0) throw Error("LDA needs beta > 0");
  for (std::size_t d = 0; d < tc.docs.size(); ++d) {
    if (tc.docs[d].empty()) throw Error("LDA cannot fit empty document '" + tc.ids[d] + "'");
  }
  LdaModel m;
  m.K = params.K;
  m.alpha = params.alpha.value_or(50.0 / static_cast<double>(params.K));
  if (m.alpha <= 0.0) throw Error("LDA needs alpha > 0");
  m.beta = params.beta;
  m.seed = params.seed;
  m.iterations = params.iterations;
  m.vocabulary = tc.vocabulary;
  m.doc_ids = tc.ids;
  const std::size_t K = m.K, V = m.V(), N = tc.docs.size();
  m.topic_word.assign(K, std::vector<int>(V, 0));
  m.doc_topic.assign(N, std::vector<int>(K, 0));
  m.topic_totals.assign(K, 0);
  m.assignments.resize(N);

  util::Rng rng(params.seed);
  for (std::size_t d = 0; d < N; ++d) {
    m.assignments[d].resize(tc.docs[d].size());
    for (std::size_t i = 0; i < tc.docs[d].size(); ++i) {
      auto k = rng.below(K);
      auto w = static_cast<std::size_t>(tc.docs[d][i]);
      m.assignments[d][i] = static_cast<int>(k);
      m.topic_word[k][w]++;
      m.doc_topic[d][k]++;
      m.topic_totals[k]++;
    }
  }

  const double vbeta = static_cast<double>(V) * m.beta;
  std::vector<double> p(K);
  for (std::size_t sweep = 1; sweep <= params.iterations; ++sweep) {
    for (std::size_t d = 0; d < N; ++d) {
      auto& dt = m.doc_topic[d];
      for (std::size_t i = 0; i < tc.docs[d].size(); ++i) {
        auto w = static_cast<std::size_t>(tc.docs[d][i]);
        auto old = static_cast<std::size_t>(m.assignments[d][i]);
        m.topic_word[old][w]--;
        dt[old]--;
        m.topic_totals[old]--;
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          total += (dt[k] + m.alpha) * (m.topic_word[k][w] + m.beta) / (m.topic_totals[k] + vbeta);
          p[k] = total;
        }
        double u = rng.uniform() * total;
        std::size_t k = 0;
        while (k + 1 < K && p[k] <= u) ++k;
        m.assignments[d][i] = static_cast<int>(k);
        m.topic_word[k][w]++;
        dt[k]++;
        m.topic_totals[k]++;
      }
    }
    if (observer) observer(sweep, m);
  }
  return m;
}

std::vector<std::string> lda_topic_keywords(const LdaModel& model, std::size_t topic, std::size_t top_n) {
  if (topic >= model.K) throw Error("LDA topic out of range");
  std::vector<std::size_t> words(model.V());
  std::iota(words.begin(), words.end(), 0);
  // Smoothed probability is monotone in the raw count within one topic.
  const auto& row = model.topic_word[topic];
  std::sort(words.begin(), words.end(), [&](std::size_t a, std::size_t b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return model.vocabulary[a] < model.vocabulary[b];
  });
  if (words.size() > top_n) words.resize(top_n);
  std::vector<std::string> out;
  for (auto w : words) out.push_back(model.vocabulary[w]);
  return out;
}

TopicKeywords lda_assign_keywords(const LdaModel& model, std::size_t doc, std::size_t top_n) {
  auto post = model.doc_posterior(doc);
  std::size_t best = 0;
  for (std::size_t k = 1; k < post.size(); ++k) {
    if (post[k] > post[best]) best = k;
  }
  return {static_cast<int>(best), lda_topic_keywords(model, best, top_n)};
}

// ---- c-TF-IDF ------------------------------------------------------------------

std::map<int, std::vector<ScoredTerm>> ctfidf_keywords(const std::vector<int>& labels, const TokenizedCorpus& tc,
                                                       std::size_t top_n) {
  if (labels.size() != tc.docs.size()) throw Error("c-TF-IDF: labels not aligned with documents");
  std::map<int, std::map<int, double>> tf;  // class -> term -> count
  std::map<int, double> f;                  // term -> frequency over all classes
  double tokens = 0.0;
  for (std::size_t d = 0; d < labels.size(); ++d) {
    if (labels[d] == kNoise) continue;
    auto& row = tf[labels[d]];
    for (int w : tc.docs[d]) {
      row[w] += 1.0;
      f[w] += 1.0;
      tokens += 1.0;
    }
  }
  if (tf.empty()) throw Error("c-TF-IDF needs at least one non-noise cluster");
  const double A = tokens / static_cast<double>(tf.size());

  std::map<int, std::vector<ScoredTerm>> out;
  for (const auto& [c, row] : tf) {
    std::vector<ScoredTerm> scored;
    for (const auto& [w, count] : row) {
      scored.push_back({tc.vocabulary[static_cast<std::size_t>(w)], count * std::log(1.0 + A / f.at(w))});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredTerm& a, const ScoredTerm& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.term < b.term;
    });
    if (scored.size() > top_n) scored.resize(top_n);
    out[c] = std::move(scored);
  }
  return out;
}

std::vector<DocKeywords> lda_document_keywords(const LdaModel& model, std::size_t top_n) {
  std::vector<DocKeywords> out;
  for (std::size_t d = 0; d < model.doc_ids.size(); ++d) {
    out.push_back({model.doc_ids[d], "LDA", lda_assign_keywords(model, d, top_n).keywords});
  }
  return out;
}

std::vector<DocKeywords> ctfidf_document_keywords(const std::vector<int>& labels, const TokenizedCorpus& tc,
                                                  std::size_t top_n) {
  auto per_class = ctfidf_keywords(labels, tc, top_n);
  std::vector<DocKeywords> out;
  for (std::size_t d = 0; d < labels.size(); ++d) {
    DocKeywords row{tc.ids[d], "CTFIDF", {}};
    if (labels[d] == kNoise) {
      row.keywords = {kOutlier};
    } else {
      for (const auto& t : per_class.at(labels[d])) row.keywords.push_back(t.term);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string keywords_to_csv(const std::vector<DocKeywords>& rows, const std::string& fingerprint) {
  std::string out = "# fingerprint=" + fingerprint + "\n";
  out += util::csv_row({"doc_id", "method", "keywords"});
  for (const auto& r : rows) out += util::csv_row({r.id, r.method, util::join(r.keywords, "|")});
  return out;
}

std::vector<DocKeywords> keywords_from_csv(std::string_view text) {
  auto t = util::parse_csv(text);
  int id = t.column("doc_id"), method = t.column("method"), kw = t.column("keywords");
  if (id < 0 || method < 0 || kw < 0) throw Error("keyword CSV needs doc_id, method, keywords columns");
  std::vector<DocKeywords> out;
  for (const auto& row : t.rows) {
    DocKeywords r{row.at(id), row.at(method), {}};
    if (!row.at(kw).empty()) r.keywords = util::split(row.at(kw), '|');
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace baselines
}  // namespace themescope
