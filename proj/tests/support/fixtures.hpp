#pragma once

// Small hand-built fixtures shared by unit and acceptance tests.

#include <optional>
#include <string>
#include <vector>

#include "themescope/corpus.hpp"
#include "themescope/evaluation.hpp"
#include "themescope/themepipeline.hpp"

namespace fixture {

using namespace themescope;

inline Document make_doc(const std::string& id, const std::string& date, Platform platform = Platform::PaidAds,
                         std::string text = "climate text") {
  Document d;
  d.id = id;
  d.platform = platform;
  d.text = std::move(text);
  d.timestamp = util::parse_iso8601(date + "T12:00:00Z");
  return d;
}

struct EventFixture {
  Corpus corpus;
  ThemeAssignment assignment;
  EventDefinition event;
};

// Twelve documents around 2024-11-05 with a three-day window. Expected
// tallies (before/after):
//   A: 2/1, impressions 3999/1499.5, spend 199/149.5
//   B: 1/1, impressions 149.5/0,     spend 0/0
//   C: 0/2, impressions 0/1499,      spend 0/149
//   D: 1/0, impressions 0/0,         spend 1499.5/0
// e05, e06 and e11 fall outside both windows; e12 is unassigned.
inline EventFixture events() {
  struct Row {
    const char* id;
    const char* date;
    const char* theme;
    std::optional<std::uint64_t> il, ih, sl, sh;
  };
  const std::vector<Row> rows{
      {"e01", "2024-11-02", "A", 1000, 1999, 100, 199},
      {"e02", "2024-11-03", "A", 2000, 2999, 0, 99},
      {"e03", "2024-11-04", "B", 100, 199, std::nullopt, std::nullopt},
      {"e04", "2024-11-04", "D", std::nullopt, std::nullopt, 1000, 1999},
      {"e05", "2024-11-01", "A", 1000, 1999, 100, 199},
      {"e06", "2024-11-05", "B", 1000, 1999, 100, 199},
      {"e07", "2024-11-06", "A", 1000, 1999, 100, 199},
      {"e08", "2024-11-06", "C", 500, 999, 50, 99},
      {"e09", "2024-11-07", "C", 500, 999, 50, 99},
      {"e10", "2024-11-08", "B", std::nullopt, std::nullopt, std::nullopt, std::nullopt},
      {"e11", "2024-11-09", "C", 500, 999, 50, 99},
      {"e12", "2024-11-07", "", 100, 199, 10, 19},
  };
  EventFixture f;
  f.event = {"fixture-event", util::parse_date("2024-11-05"), 3};
  for (const auto& r : rows) {
    auto d = make_doc(r.id, r.date);
    d.impressions_low = r.il;
    d.impressions_high = r.ih;
    d.spend_low = r.sl;
    d.spend_high = r.sh;
    f.corpus.documents.push_back(d);
    f.assignment.ids.push_back(r.id);
    f.assignment.labels.push_back(*r.theme ? std::optional<std::string>(r.theme) : std::nullopt);
  }
  return f;
}

// Six documents with theme T on the first three and Pro-Climate on
// documents 1, 2 and 4: a = 2, b = 1, c = 1, d = 2, so phi = 3 / 9.
inline std::pair<Corpus, ThemeAssignment> phi_fixture() {
  Corpus c;
  ThemeAssignment a;
  const Stance stances[] = {Stance::ProClimate, Stance::ProClimate, Stance::ProEnergy,
                            Stance::ProClimate, Stance::Neutral,    Stance::ProEnergy};
  for (int i = 0; i < 6; ++i) {
    auto d = make_doc("p" + std::to_string(i + 1), "2024-11-01");
    d.stance = stances[i];
    c.documents.push_back(d);
    a.ids.push_back(d.id);
    a.labels.push_back(i < 3 ? "T" : "U");
  }
  return {c, a};
}

// Each theme label appears verbatim as one document on every platform, plus
// unrelated filler documents.
struct RetrievalFixture {
  std::vector<std::string> labels;
  Corpus corpus;
};

inline RetrievalFixture retrieval() {
  RetrievalFixture f;
  f.labels = {"Rooftop solar", "Offshore drilling", "Ocean plastic", "Wildfire smoke"};
  const std::vector<std::string> filler{"city council budget vote", "school board meeting tonight",
                                        "local bakery opening soon", "weekend football highlights"};
  int n = 0;
  for (Platform p : {Platform::PaidAds, Platform::PublicPosts}) {
    for (const auto& l : f.labels) f.corpus.documents.push_back(make_doc("r" + std::to_string(++n), "2024-11-01", p, l));
    for (const auto& t : filler) f.corpus.documents.push_back(make_doc("r" + std::to_string(++n), "2024-11-01", p, t));
  }
  return f;
}

}  // namespace fixture

namespace fixture {

// Four clusters whose summaries pair up: cosine 0.85 inside {0,1} and {2,3},
// 0.3 across. Documents of paired clusters sit next to each other in the
// reduced space, so the two-group partition scores best.
struct MergeGeometry {
  Matrix summaries;
  Matrix reduced_docs;
  std::vector<int> doc_cluster;
  std::vector<std::vector<double>> similarity;
};

inline MergeGeometry merge_geometry() {
  MergeGeometry g;
  Eigen::MatrixXd gram(4, 4);
  gram << 1, .85, .3, .3, .85, 1, .3, .3, .3, .3, 1, .85, .3, .3, .85, 1;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  Eigen::MatrixXd l = llt.matrixL();
  g.summaries = l;  // rows are unit vectors with the requested inner products
  g.similarity.assign(4, std::vector<double>(4));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g.similarity[i][j] = gram(i, j);
  const double centers[4][2] = {{0, 0}, {1, 0}, {10, 0}, {11, 0}};
  util::Rng rng(3);
  g.reduced_docs.resize(40, 2);
  for (int i = 0; i < 40; ++i) {
    const int c = i / 10;
    g.doc_cluster.push_back(c);
    g.reduced_docs(i, 0) = centers[c][0] + 0.05 * rng.normal();
    g.reduced_docs(i, 1) = centers[c][1] + 0.05 * rng.normal();
  }
  return g;
}

}  // namespace fixture
