#include "themescope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "parallel.hpp"

namespace themescope {

using nlohmann::json;

std::string_view to_string(JudgeMethod m) {
  switch (m) {
    case JudgeMethod::Lda: return "LDA";
    case JudgeMethod::Ctfidf: return "CTFIDF";
    case JudgeMethod::LlmSummary: return "LLM_SUMMARY";
    case JudgeMethod::LlmTheme: return "LLM_THEME";
  }
  return "?";
}

std::string_view to_string(Judge j) { return j == Judge::Human ? "HUMAN" : "LLM"; }

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::Abstain: return "abstain";
  }
  return "?";
}

JudgeMethod parse_judge_method(std::string_view s) {
  for (auto m : {JudgeMethod::Lda, JudgeMethod::Ctfidf, JudgeMethod::LlmSummary, JudgeMethod::LlmTheme}) {
    if (s == to_string(m)) return m;
  }
  throw Error("unknown judge method: " + std::string(s));
}

Judge parse_judge(std::string_view s) {
  if (s == "HUMAN") return Judge::Human;
  if (s == "LLM") return Judge::Llm;
  throw Error("unknown judge: " + std::string(s));
}

Verdict parse_verdict(std::string_view s) {
  auto v = util::casefold(util::trim(s));
  if (v == "correct") return Verdict::Correct;
  if (v == "incorrect") return Verdict::Incorrect;
  if (v == "abstain") return Verdict::Abstain;
  throw Error("unknown verdict: " + std::string(s));
}

namespace evaluation {

namespace {

std::string header(const std::string& fingerprint) { return "# fingerprint=" + fingerprint + "\n"; }

std::string fmt(double v) { return util::format_double(v); }

}  // namespace

// ---- judge accuracy ------------------------------------------------------------

std::vector<JudgmentRecord> judgments_from_csv(std::string_view text) {
  auto t = util::parse_csv(text);
  int id = t.column("doc_id"), method = t.column("method"), judge = t.column("judge"), verdict = t.column("verdict");
  if (id < 0 || method < 0 || judge < 0 || verdict < 0) {
    throw Error("judgment CSV needs doc_id, method, judge, verdict columns");
  }
  std::vector<JudgmentRecord> out;
  std::set<std::tuple<std::string, JudgeMethod, Judge>> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    JudgmentRecord rec{row.at(id), parse_judge_method(row.at(method)), parse_judge(row.at(judge)),
                       parse_verdict(row.at(verdict))};
    if (!seen.emplace(rec.doc_id, rec.method, rec.judge).second) {
      throw Error("duplicate judgment for doc '" + rec.doc_id + "', method " + std::string(to_string(rec.method)) +
                  ", judge " + std::string(to_string(rec.judge)) + " (row " + std::to_string(r + 1) + ")");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string judgments_to_csv(const std::vector<JudgmentRecord>& records, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"doc_id", "method", "judge", "verdict"});
  for (const auto& r : records) {
    out += util::csv_row(
        {r.doc_id, std::string(to_string(r.method)), std::string(to_string(r.judge)), std::string(to_string(r.verdict))});
  }
  return out;
}

std::vector<AccuracyCell> accuracy_report(const std::vector<JudgmentRecord>& records) {
  std::map<std::pair<JudgeMethod, Judge>, AccuracyCell> cells;
  for (const auto& r : records) {
    auto [it, _] = cells.try_emplace({r.method, r.judge}, AccuracyCell{r.method, r.judge});
    auto& c = it->second;
    switch (r.verdict) {
      case Verdict::Correct: ++c.correct; break;
      case Verdict::Incorrect: ++c.incorrect; break;
      case Verdict::Abstain: ++c.abstained; break;
    }
  }
  std::vector<AccuracyCell> out;
  for (auto& [key, c] : cells) {
    const auto scored = c.correct + c.incorrect;
    if (scored == 0) {
      spdlog::warn("no non-abstaining judgments for {} / {}; cell omitted", to_string(c.method), to_string(c.judge));
      continue;
    }
    c.accuracy = static_cast<double>(c.correct) / static_cast<double>(scored);
    out.push_back(c);
  }
  return out;
}

json accuracy_to_json(const std::vector<AccuracyCell>& cells) {
  json a = json::array();
  for (const auto& c : cells) {
    a.push_back({{"method", to_string(c.method)},
                 {"judge", to_string(c.judge)},
                 {"correct", c.correct},
                 {"incorrect", c.incorrect},
                 {"abstained", c.abstained},
                 {"accuracy", c.accuracy}});
  }
  return a;
}

std::string accuracy_to_csv(const std::vector<AccuracyCell>& cells, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"method", "judge", "accuracy", "correct", "incorrect", "abstained"});
  for (const auto& c : cells) {
    out += util::csv_row({std::string(to_string(c.method)), std::string(to_string(c.judge)), fmt(c.accuracy),
                          std::to_string(c.correct), std::to_string(c.incorrect), std::to_string(c.abstained)});
  }
  return out;
}

std::vector<JudgmentRecord> run_llm_judge(Gateway& gateway, JudgeMethod method, const std::vector<JudgeInput>& inputs,
                                          std::size_t workers) {
  const bool keywords = method == JudgeMethod::Lda || method == JudgeMethod::Ctfidf;
  std::vector<JudgmentRecord> out(inputs.size());
  detail::parallel_for(inputs.size(), workers, [&](std::size_t i) {
    const auto& in = inputs[i];
    JudgmentRecord& rec = out[i];
    rec.doc_id = in.doc_id;
    rec.method = method;
    rec.judge = Judge::Llm;
    std::string candidate;
    if (keywords) {
      bool outlier = in.keywords.empty() || (in.keywords.size() == 1 && in.keywords[0] == baselines::kOutlier);
      if (!outlier) candidate = util::join(in.keywords, ", ");
    } else if (in.label) {
      candidate = *in.label;
    }
    if (candidate.empty()) {
      rec.verdict = Verdict::Incorrect;
      return;
    }
    auto v = gateway.judge_assignment(in.text, candidate, keywords);
    rec.verdict = !v ? Verdict::Abstain : (*v ? Verdict::Correct : Verdict::Incorrect);
  });
  return out;
}

// ---- correlation ------------------------------------------------------------------

std::optional<double> phi(const std::vector<bool>& x, const std::vector<bool>& y) {
  if (x.size() != y.size()) throw Error("phi: indicator vectors differ in length");
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] && y[i]) ++n11;
    else if (x[i]) ++n10;
    else if (y[i]) ++n01;
    else ++n00;
  }
  const double denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
  if (denom == 0.0) return std::nullopt;
  return (n11 * n00 - n10 * n01) / std::sqrt(denom);
}

CorrelationMatrix stance_theme_correlation(const ThemeAssignment& assignment, const Corpus& corpus) {
  std::map<std::string, const Document*> by_id;
  for (const auto& d : corpus.documents) by_id[d.id] = &d;
  std::vector<std::string> doc_theme;
  std::vector<Stance> doc_stance;
  for (std::size_t i = 0; i < assignment.ids.size(); ++i) {
    if (!assignment.labels[i]) continue;
    auto it = by_id.find(assignment.ids[i]);
    if (it == by_id.end() || !it->second->stance) continue;
    doc_theme.push_back(*assignment.labels[i]);
    doc_stance.push_back(*it->second->stance);
  }
  CorrelationMatrix m;
  m.n_scored = doc_theme.size();
  std::set<std::string> themes(doc_theme.begin(), doc_theme.end());
  m.themes.assign(themes.begin(), themes.end());
  for (const auto& theme : m.themes) {
    std::array<CorrelationCell, kStanceCount> row{};
    std::vector<bool> in_theme(doc_theme.size());
    for (std::size_t i = 0; i < doc_theme.size(); ++i) in_theme[i] = doc_theme[i] == theme;
    for (std::size_t s = 0; s < kStanceCount; ++s) {
      std::vector<bool> has_stance(doc_stance.size());
      for (std::size_t i = 0; i < doc_stance.size(); ++i) {
        has_stance[i] = stance_index(doc_stance[i]) == s;
        if (in_theme[i] && has_stance[i]) ++row[s].support;
      }
      row[s].phi = phi(in_theme, has_stance);
    }
    m.cells.push_back(row);
  }
  return m;
}

namespace {
const Stance kStances[kStanceCount] = {Stance::ProClimate, Stance::ProEnergy, Stance::Neutral};
}

json correlation_to_json(const CorrelationMatrix& m) {
  json j;
  j["n_scored"] = m.n_scored;
  j["cells"] = json::array();
  for (std::size_t t = 0; t < m.themes.size(); ++t) {
    for (std::size_t s = 0; s < kStanceCount; ++s) {
      const auto& c = m.cells[t][s];
      j["cells"].push_back({{"theme", m.themes[t]},
                            {"stance", to_string(kStances[s])},
                            {"phi", c.phi ? json(*c.phi) : json("UNDEFINED")},
                            {"support", c.support}});
    }
  }
  return j;
}

std::string correlation_to_csv(const CorrelationMatrix& m, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"theme", "stance", "phi", "support"});
  for (std::size_t t = 0; t < m.themes.size(); ++t) {
    for (std::size_t s = 0; s < kStanceCount; ++s) {
      const auto& c = m.cells[t][s];
      out += util::csv_row({m.themes[t], std::string(to_string(kStances[s])), c.phi ? fmt(*c.phi) : "UNDEFINED",
                            std::to_string(c.support)});
    }
  }
  return out;
}

// ---- retrieval ----------------------------------------------------------------------

std::vector<std::string> normalized_tokens(std::string_view text, const StopwordList& stopwords) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& t : util::word_tokens(text)) {
    if (stopwords.contains(t)) continue;
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

RetrievalReport retrieval_eval(const std::vector<std::string>& theme_labels, const VectorSet& theme_vectors,
                               const VectorSet& doc_vectors, const Corpus& corpus, const StopwordList& stopwords,
                               const std::vector<std::size_t>& ks) {
  if (theme_vectors.size() != theme_labels.size()) throw Error("retrieval: one vector per theme label required");
  if (doc_vectors.size() != corpus.documents.size()) throw Error("retrieval: document vectors not aligned with corpus");
  if (theme_vectors.dim() != doc_vectors.dim()) {
    throw DimensionMismatch("retrieval: theme and document vectors have different dimensions");
  }
  for (auto k : ks) {
    if (k == 0) throw Error("retrieval: k must be >= 1");
  }
  RetrievalReport report;

  std::vector<std::set<std::string>> doc_tokens;
  for (const auto& d : corpus.documents) {
    auto toks = normalized_tokens(d.text, stopwords);
    doc_tokens.emplace_back(toks.begin(), toks.end());
  }
  std::vector<std::vector<std::string>> theme_tokens;
  for (const auto& label : theme_labels) {
    theme_tokens.push_back(normalized_tokens(label, stopwords));
    if (theme_tokens.back().empty()) {
      spdlog::warn("theme '{}' has no tokens after stopword removal; excluded from retrieval", label);
      report.excluded_themes.push_back(label);
    }
  }

  std::set<Platform> platforms;
  for (const auto& d : corpus.documents) platforms.insert(d.platform);
  for (Platform p : platforms) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i)
      if (corpus.documents[i].platform == p) rows.push_back(i);
    for (auto k : ks) {
      RetrievalRow row{p, k, 0.0, 0};
      double sum = 0.0;
      for (std::size_t t = 0; t < theme_labels.size(); ++t) {
        if (theme_tokens[t].empty()) continue;
        std::vector<std::pair<double, std::size_t>> ranked;
        for (auto r : rows) {
          ranked.push_back({embedding::cosine_similarity(theme_vectors.row(t), doc_vectors.row(r)), r});
        }
        const std::size_t take = std::min(k, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                          [&](const auto& a, const auto& b) {
                            if (a.first != b.first) return a.first > b.first;
                            return corpus.documents[a.second].id < corpus.documents[b.second].id;
                          });
        RetrievalThemeResult res{theme_labels[t], p, k, 0.0, {}};
        std::size_t hits = 0;
        for (std::size_t i = 0; i < take; ++i) {
          const auto r = ranked[i].second;
          res.retrieved_ids.push_back(corpus.documents[r].id);
          for (const auto& tok : theme_tokens[t]) {
            if (doc_tokens[r].count(tok)) {
              ++hits;
              break;
            }
          }
        }
        res.precision = take == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(take);
        sum += res.precision;
        ++row.n_themes;
        report.per_theme.push_back(std::move(res));
      }
      row.macro_precision = row.n_themes == 0 ? 0.0 : sum / static_cast<double>(row.n_themes);
      report.rows.push_back(row);
    }
  }
  return report;
}

RetrievalReport retrieval_eval(const ThemeModel& model, EmbeddingProvider& embedder, const VectorSet& doc_vectors,
                               const Corpus& corpus, const StopwordList& stopwords, const std::vector<std::size_t>& ks) {
  std::vector<std::string> labels;
  for (const auto& c : model.clusters) labels.push_back(c.theme_label);
  auto tv = embedding::l2_normalize(embedding::embed_batch(embedder, labels));
  return retrieval_eval(labels, tv, doc_vectors, corpus, stopwords, ks);
}

json retrieval_to_json(const RetrievalReport& r) {
  json j;
  j["rows"] = json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"platform", to_string(row.platform)},
                         {"k", row.k},
                         {"macro_precision", row.macro_precision},
                         {"n_themes", row.n_themes}});
  }
  j["per_theme"] = json::array();
  for (const auto& t : r.per_theme) {
    j["per_theme"].push_back({{"theme", t.theme},
                              {"platform", to_string(t.platform)},
                              {"k", t.k},
                              {"precision", t.precision},
                              {"retrieved_ids", t.retrieved_ids}});
  }
  j["excluded_themes"] = r.excluded_themes;
  return j;
}

std::string retrieval_to_csv(const RetrievalReport& r, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"platform", "metric", "k", "value", "n_themes"});
  for (const auto& row : r.rows) {
    out += util::csv_row({std::string(to_string(row.platform)), "P@" + std::to_string(row.k), std::to_string(row.k),
                          fmt(row.macro_precision), std::to_string(row.n_themes)});
  }
  return out;
}

// ---- events ------------------------------------------------------------------------

namespace {

double midpoint_impressions(const Document& d) {
  if (d.impressions_low && d.impressions_high) {
    return (static_cast<double>(*d.impressions_low) + static_cast<double>(*d.impressions_high)) / 2.0;
  }
  return 0.0;
}

double midpoint_spend(const Document& d) {
  if (d.spend_low && d.spend_high) return (*d.spend_low + *d.spend_high) / 2.0;
  return 0.0;
}

}  // namespace

EventReport event_report(const Corpus& corpus, const ThemeAssignment& assignment, const EventDefinition& event) {
  if (event.window_days < 1) throw Error("event window must be at least one day");
  std::map<std::string, std::string> theme_of;
  for (std::size_t i = 0; i < assignment.ids.size(); ++i) {
    if (assignment.labels[i]) theme_of[assignment.ids[i]] = *assignment.labels[i];
  }
  auto split = corpus::window_split(corpus, event.date, event.window_days);
  EventReport r;
  r.event = event;
  std::map<std::string, EventThemeRow> rows;
  auto add = [&](const Corpus& part, bool before) {
    for (const auto& d : part.documents) {
      auto it = theme_of.find(d.id);
      if (it == theme_of.end()) continue;
      auto& row = rows[it->second];
      row.theme = it->second;
      if (before) {
        ++row.before_count;
        row.before_impressions += midpoint_impressions(d);
        row.before_spend += midpoint_spend(d);
        ++r.before_assigned;
      } else {
        ++row.after_count;
        row.after_impressions += midpoint_impressions(d);
        row.after_spend += midpoint_spend(d);
        ++r.after_assigned;
      }
    }
  };
  add(split.before, true);
  add(split.after, false);
  for (auto& [label, row] : rows) {
    if (row.before_count == 0 && row.after_count > 0) r.emergent.push_back(label);
    if (row.before_count > 0 && row.after_count == 0) r.disappeared.push_back(label);
    r.themes.push_back(row);
  }
  std::vector<const EventThemeRow*> order;
  for (const auto& row : r.themes) order.push_back(&row);
  std::stable_sort(order.begin(), order.end(), [](const EventThemeRow* a, const EventThemeRow* b) {
    auto da = std::labs(a->delta()), db = std::labs(b->delta());
    if (da != db) return da > db;
    return a->theme < b->theme;
  });
  for (std::size_t i = 0; i < order.size() && i < 5; ++i) r.top_changes.push_back(order[i]->theme);
  return r;
}

json event_to_json(const EventReport& r) {
  json j;
  j["event"] = r.event.name;
  j["date"] = util::format_date(r.event.date);
  j["window_days"] = r.event.window_days;
  j["before_assigned"] = r.before_assigned;
  j["after_assigned"] = r.after_assigned;
  j["top_changes"] = r.top_changes;
  j["emergent"] = r.emergent;
  j["disappeared"] = r.disappeared;
  j["themes"] = json::array();
  for (const auto& t : r.themes) {
    j["themes"].push_back({{"theme", t.theme},
                           {"before_count", t.before_count},
                           {"after_count", t.after_count},
                           {"delta", t.delta()},
                           {"before_impressions_mid", t.before_impressions},
                           {"after_impressions_mid", t.after_impressions},
                           {"before_spend_mid", t.before_spend},
                           {"after_spend_mid", t.after_spend}});
  }
  return j;
}

std::string event_to_csv(const EventReport& r, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"theme", "window", "count", "impressions_mid", "spend_mid"});
  for (const auto& t : r.themes) {
    out += util::csv_row({t.theme, "before", std::to_string(t.before_count), fmt(t.before_impressions),
                          fmt(t.before_spend)});
    out += util::csv_row({t.theme, "after", std::to_string(t.after_count), fmt(t.after_impressions),
                          fmt(t.after_spend)});
  }
  return out;
}

// ---- unified counts ----------------------------------------------------------------

std::vector<ThemeMapping> mapping_from_csv(std::string_view text) {
  auto t = util::parse_csv(text);
  int u = t.column("unified_label"), p = t.column("platform"), s = t.column("source_theme");
  if (u < 0 || p < 0 || s < 0) throw Error("mapping CSV needs unified_label, platform, source_theme columns");
  std::vector<ThemeMapping> out;
  for (const auto& row : t.rows) out.push_back({row.at(u), parse_platform(row.at(p)), row.at(s)});
  return out;
}

std::vector<UnifiedCount> unified_counts(const std::vector<PlatformThemes>& platforms,
                                         const std::vector<ThemeMapping>& mapping) {
  std::map<std::pair<Platform, std::string>, std::string> to_unified;
  std::set<std::string> unified_labels;
  for (const auto& m : mapping) {
    const PlatformThemes* pt = nullptr;
    for (const auto& p : platforms)
      if (p.platform == m.platform) pt = &p;
    if (!pt) throw Error("mapping references platform " + std::string(to_string(m.platform)) + " with no assignment");
    bool known = false;
    if (pt->model) {
      known = pt->model->find_label(m.source_theme) >= 0;
    } else {
      for (const auto& l : pt->assignment->labels) known = known || (l && *l == m.source_theme);
    }
    if (!known) {
      throw Error("mapping references theme '" + m.source_theme + "' which does not exist on " +
                  std::string(to_string(m.platform)));
    }
    auto key = std::make_pair(m.platform, pt->model ? util::casefold(m.source_theme) : m.source_theme);
    auto [it, fresh] = to_unified.emplace(key, m.unified_label);
    if (!fresh && it->second != m.unified_label) {
      throw Error("theme '" + m.source_theme + "' is mapped to two unified labels");
    }
    unified_labels.insert(m.unified_label);
  }
  std::map<std::pair<std::string, Platform>, std::size_t> counts;
  for (const auto& label : unified_labels)
    for (const auto& p : platforms) counts[{label, p.platform}] = 0;
  for (const auto& p : platforms) {
    for (const auto& l : p.assignment->labels) {
      if (!l) continue;
      auto it = to_unified.find({p.platform, p.model ? util::casefold(*l) : *l});
      if (it != to_unified.end()) ++counts[{it->second, p.platform}];
    }
  }
  std::vector<UnifiedCount> out;
  for (const auto& [key, n] : counts) out.push_back({key.first, key.second, n});
  return out;
}

std::string unified_to_csv(const std::vector<UnifiedCount>& counts, const std::string& fingerprint) {
  std::string out = header(fingerprint) + util::csv_row({"unified_label", "platform", "count"});
  for (const auto& c : counts) out += util::csv_row({c.unified_label, std::string(to_string(c.platform)), std::to_string(c.count)});
  return out;
}

}  // namespace evaluation
}  // namespace themescope
