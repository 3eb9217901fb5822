#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "themescope/corpus.hpp"
#include "themescope/llmgateway.hpp"
#include "themescope/themepipeline.hpp"

namespace themescope {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SplitSpec {
  double test_fraction = 0.2;
  double val_fraction_of_train = 0.2;
  std::uint64_t seed = 13;

  void validate() const;
};

// Sorted index lists into the labeled input.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct NgramRange {
  int lo = 1;
  int hi = 1;

  std::string to_string() const;
  bool operator==(const NgramRange&) const = default;
};

class TfidfSpace {
 public:
  static TfidfSpace fit(const std::vector<std::string>& texts, NgramRange range);

  SparseMatrix transform(const std::vector<std::string>& texts) const;
  std::size_t n_features() const { return idf_.size(); }
  const std::map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  NgramRange range() const { return range_; }

 private:
  std::map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  NgramRange range_;
};

struct LogRegParams {
  double C = 1.0;
  std::size_t max_epochs = 500;
  double tolerance = 1e-9;
};

struct StanceClassifier {
  Eigen::MatrixXd weights;  // kStanceCount x F
  Eigen::VectorXd bias;     // kStanceCount
  double C = 1.0;
  std::vector<double> objective_trace;  // objective after each accepted step, starting at the initial point

  Eigen::MatrixXd scores(const SparseMatrix& X) const;
  std::vector<Stance> predict(const SparseMatrix& X) const;
};

struct StanceMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<std::array<std::size_t, kStanceCount>, kStanceCount> confusion{};  // [truth][predicted]
};

struct StanceGrid {
  std::vector<NgramRange> ngram_ranges{{1, 1}, {1, 2}, {2, 3}};
  std::vector<double> Cs{0.1, 1.0, 10.0};
};

struct LabeledSet {
  std::string platform;  // label used in result rows
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<std::string> themes;
  std::vector<Stance> labels;
};

struct VariantResult {
  StanceVariant variant;
  NgramRange ngram;
  double C = 0.0;
  double val_accuracy = 0.0;
  StanceMetrics test;
};

struct ResultRow {
  std::string model;
  std::string variant;
  std::string platform;
  double accuracy = 0.0;
  double f1 = 0.0;
};

namespace stance {

Split stratified_split(const std::vector<Stance>& labels, const SplitSpec& spec);

std::vector<std::string> ngrams(std::string_view text, NgramRange range);
std::pair<TfidfSpace, SparseMatrix> tfidf_fit_transform(const std::vector<std::string>& texts, NgramRange range);

// Summed multinomial NLL + 1/(2C) * ||W||^2, bias unpenalized. Gradients are
// written when the pointers are non-null.
double logreg_objective(const SparseMatrix& X, const std::vector<std::size_t>& y, const Eigen::MatrixXd& W,
                        const Eigen::VectorXd& b, double C, Eigen::MatrixXd* grad_W = nullptr,
                        Eigen::VectorXd* grad_b = nullptr);

StanceClassifier logreg_train(const SparseMatrix& X, const std::vector<Stance>& labels, const LogRegParams& params);

StanceMetrics metrics_from_predictions(const std::vector<Stance>& truth, const std::vector<Stance>& predicted);
double macro_f1(const std::array<std::array<std::size_t, kStanceCount>, kStanceCount>& confusion);
StanceMetrics stance_evaluate(const StanceClassifier& clf, const SparseMatrix& X, const std::vector<Stance>& labels);

// Text and/or theme features for one variant; the combined variant
// concatenates two independently fitted blocks.
class VariantFeatures {
 public:
  static VariantFeatures fit(StanceVariant variant, const std::vector<std::string>& texts,
                             const std::vector<std::string>& themes, NgramRange range);
  SparseMatrix transform(const std::vector<std::string>& texts, const std::vector<std::string>& themes) const;

 private:
  StanceVariant variant_ = StanceVariant::Text;
  std::vector<TfidfSpace> blocks_;
};

struct Selection {
  NgramRange ngram;
  double C = 0.0;
  double val_accuracy = 0.0;
};

// Fits on train and scores on validation only. Ties keep the earliest grid
// point (ngram ranges outer, C inner).
Selection select_hyperparameters(StanceVariant variant, const LabeledSet& train, const LabeledSet& val,
                                 const StanceGrid& grid, const LogRegParams& base, std::size_t workers = 4);

LabeledSet subset(const LabeledSet& data, const std::vector<std::size_t>& idx);

// Labeled documents with an assigned theme; others are skipped with a warning.
LabeledSet build_labeled_set(const Corpus& corpus, const ThemeAssignment& assignment, std::string platform);

std::vector<VariantResult> run_variants(const LabeledSet& data, const SplitSpec& spec, const StanceGrid& grid,
                                        const LogRegParams& base = {}, std::size_t workers = 4);

// LLM-prompted stance on the test split of `spec`.
std::vector<ResultRow> llm_stance_rows(Gateway& gateway, const LabeledSet& data, const SplitSpec& spec,
                                       std::size_t workers = 4);

std::vector<ResultRow> result_rows(const std::vector<VariantResult>& results, const std::string& platform);
// model,variant,platform,Acc,F1
std::string results_to_csv(const std::vector<ResultRow>& rows, const std::string& fingerprint);

}  // namespace stance
}  // namespace themescope
