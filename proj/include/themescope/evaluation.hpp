#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "themescope/baselines.hpp"
#include "themescope/corpus.hpp"
#include "themescope/embedding.hpp"
#include "themescope/llmgateway.hpp"
#include "themescope/themepipeline.hpp"

namespace themescope {

enum class JudgeMethod { Lda, Ctfidf, LlmSummary, LlmTheme };
enum class Judge { Human, Llm };
enum class Verdict { Correct, Incorrect, Abstain };

std::string_view to_string(JudgeMethod m);
std::string_view to_string(Judge j);
std::string_view to_string(Verdict v);
JudgeMethod parse_judge_method(std::string_view s);
Judge parse_judge(std::string_view s);
Verdict parse_verdict(std::string_view s);

struct JudgmentRecord {
  std::string doc_id;
  JudgeMethod method = JudgeMethod::LlmTheme;
  Judge judge = Judge::Human;
  Verdict verdict = Verdict::Abstain;
};

struct AccuracyCell {
  JudgeMethod method;
  Judge judge;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t abstained = 0;
  double accuracy = 0.0;
};

struct CorrelationCell {
  std::optional<double> phi;  // nullopt = UNDEFINED (zero-variance margin)
  std::size_t support = 0;    // documents with this theme and this stance
};

struct CorrelationMatrix {
  std::vector<std::string> themes;
  std::vector<std::array<CorrelationCell, kStanceCount>> cells;  // per theme, per stance
  std::size_t n_scored = 0;
};

struct RetrievalThemeResult {
  std::string theme;
  Platform platform;
  std::size_t k = 0;
  double precision = 0.0;
  std::vector<std::string> retrieved_ids;
};

struct RetrievalRow {
  Platform platform;
  std::size_t k = 0;
  double macro_precision = 0.0;
  std::size_t n_themes = 0;
};

struct RetrievalReport {
  std::vector<RetrievalRow> rows;
  std::vector<RetrievalThemeResult> per_theme;
  std::vector<std::string> excluded_themes;
};

struct EventDefinition {
  std::string name;
  std::chrono::sys_days date;
  int window_days = 3;
};

struct EventThemeRow {
  std::string theme;
  std::size_t before_count = 0;
  std::size_t after_count = 0;
  double before_impressions = 0.0;  // sum of midpoints
  double after_impressions = 0.0;
  double before_spend = 0.0;
  double after_spend = 0.0;

  long delta() const { return static_cast<long>(after_count) - static_cast<long>(before_count); }
};

struct EventReport {
  EventDefinition event;
  std::vector<EventThemeRow> themes;  // sorted by label
  std::vector<std::string> top_changes;
  std::vector<std::string> emergent;
  std::vector<std::string> disappeared;
  std::size_t before_assigned = 0;
  std::size_t after_assigned = 0;
};

struct ThemeMapping {
  std::string unified_label;
  Platform platform;
  std::string source_theme;
};

struct PlatformThemes {
  Platform platform;
  const ThemeAssignment* assignment;
  const ThemeModel* model = nullptr;  // when set, defines the known themes
};

struct UnifiedCount {
  std::string unified_label;
  Platform platform;
  std::size_t count = 0;
};

namespace evaluation {

// ---- judge accuracy ----

std::vector<JudgmentRecord> judgments_from_csv(std::string_view text);
std::string judgments_to_csv(const std::vector<JudgmentRecord>& records, const std::string& fingerprint);

// One cell per (method, judge) with at least one non-abstain record.
std::vector<AccuracyCell> accuracy_report(const std::vector<JudgmentRecord>& records);
nlohmann::json accuracy_to_json(const std::vector<AccuracyCell>& cells);
std::string accuracy_to_csv(const std::vector<AccuracyCell>& cells, const std::string& fingerprint);

struct JudgeInput {
  std::string doc_id;
  std::string text;
  std::optional<std::string> label;       // theme label (LLM methods); nullopt = UNASSIGNED
  std::vector<std::string> keywords;      // LDA / CTFIDF; {"outlier"} = no topic
};

// UNASSIGNED texts and outlier keyword sets are recorded as incorrect
// without a judge call.
std::vector<JudgmentRecord> run_llm_judge(Gateway& gateway, JudgeMethod method, const std::vector<JudgeInput>& inputs,
                                          std::size_t workers = 4);

// ---- correlation ----

std::optional<double> phi(const std::vector<bool>& x, const std::vector<bool>& y);
CorrelationMatrix stance_theme_correlation(const ThemeAssignment& assignment, const Corpus& corpus);
nlohmann::json correlation_to_json(const CorrelationMatrix& m);
// theme,stance,phi,support with phi "UNDEFINED" for flagged cells.
std::string correlation_to_csv(const CorrelationMatrix& m, const std::string& fingerprint);

// ---- retrieval ----

// Case-folded, punctuation-free, stopword-free unique tokens.
std::vector<std::string> normalized_tokens(std::string_view text, const StopwordList& stopwords);

// theme_vectors row i embeds theme_labels[i]; doc_vectors rows align with
// corpus documents. Both sets are compared by cosine.
RetrievalReport retrieval_eval(const std::vector<std::string>& theme_labels, const VectorSet& theme_vectors,
                               const VectorSet& doc_vectors, const Corpus& corpus, const StopwordList& stopwords,
                               const std::vector<std::size_t>& ks);
RetrievalReport retrieval_eval(const ThemeModel& model, EmbeddingProvider& embedder, const VectorSet& doc_vectors,
                               const Corpus& corpus, const StopwordList& stopwords, const std::vector<std::size_t>& ks);
nlohmann::json retrieval_to_json(const RetrievalReport& r);
std::string retrieval_to_csv(const RetrievalReport& r, const std::string& fingerprint);

// ---- events ----

EventReport event_report(const Corpus& corpus, const ThemeAssignment& assignment, const EventDefinition& event);
nlohmann::json event_to_json(const EventReport& r);
// theme,window,count,impressions_mid,spend_mid
std::string event_to_csv(const EventReport& r, const std::string& fingerprint);

// ---- unified counts ----

std::vector<ThemeMapping> mapping_from_csv(std::string_view text);
std::vector<UnifiedCount> unified_counts(const std::vector<PlatformThemes>& platforms,
                                         const std::vector<ThemeMapping>& mapping);
std::string unified_to_csv(const std::vector<UnifiedCount>& counts, const std::string& fingerprint);

}  // namespace evaluation
}  // namespace themescope
