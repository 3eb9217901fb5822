#include "themescope/stancelab.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include <spdlog/spdlog.h>

#include "parallel.hpp"

namespace themescope {

void SplitSpec::validate() const {
  auto ok = [](double f) { return f > 0.0 && f < 1.0; };
  if (!ok(test_fraction) || !ok(val_fraction_of_train)) throw Error("split fractions must lie in (0, 1)");
}

std::string NgramRange::to_string() const { return "(" + std::to_string(lo) + "," + std::to_string(hi) + ")"; }

namespace stance {

std::vector<std::string> ngrams(std::string_view text, NgramRange range) {
  if (range.lo < 1 || range.lo > range.hi) throw Error("invalid n-gram range " + range.to_string());
  auto tokens = util::word_tokens(text);
  std::vector<std::string> out;
  for (int n = range.lo; n <= range.hi; ++n) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t j = 1; j < len; ++j) g += " " + tokens[i + j];
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace stance

TfidfSpace TfidfSpace::fit(const std::vector<std::string>& texts, NgramRange range) {
  if (texts.empty()) throw Error("TF-IDF needs at least one text");
  std::map<std::string, std::size_t> df;
  for (const auto& t : texts) {
    auto grams = stance::ngrams(t, range);
    std::set<std::string> uniq(grams.begin(), grams.end());
    for (const auto& g : uniq) ++df[g];
  }
  TfidfSpace s;
  s.range_ = range;
  const double n = static_cast<double>(texts.size());
  for (const auto& [g, count] : df) {
    s.vocabulary_.emplace(g, s.idf_.size());
    s.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return s;
}

SparseMatrix TfidfSpace::transform(const std::vector<std::string>& texts) const {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < texts.size(); ++r) {
    std::map<std::size_t, double> counts;
    for (const auto& g : stance::ngrams(texts[r], range_)) {
      auto it = vocabulary_.find(g);
      if (it != vocabulary_.end()) counts[it->second] += 1.0;
    }
    double norm = 0.0;
    for (auto& [col, v] : counts) {
      v *= idf_[col];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (const auto& [col, v] : counts) {
      trip.emplace_back(static_cast<int>(r), static_cast<int>(col), v / norm);
    }
  }
  SparseMatrix X(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(idf_.size()));
  X.setFromTriplets(trip.begin(), trip.end());
  return X;
}

Eigen::MatrixXd StanceClassifier::scores(const SparseMatrix& X) const {
  if (X.cols() != weights.cols()) throw DimensionMismatch("stance classifier: feature count differs from training");
  Eigen::MatrixXd Z = X * weights.transpose();
  Z.rowwise() += bias.transpose();
  return Z;
}

std::vector<Stance> StanceClassifier::predict(const SparseMatrix& X) const {
  Eigen::MatrixXd Z = scores(X);
  std::vector<Stance> out;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    Eigen::Index best = 0;
    Z.row(i).maxCoeff(&best);
    out.push_back(static_cast<Stance>(best));
  }
  return out;
}

namespace stance {

Split stratified_split(const std::vector<Stance>& labels, const SplitSpec& spec) {
  spec.validate();
  if (labels.empty()) throw Error("stratified split of an empty set");
  util::Rng rng(spec.seed);
  Split s;
  for (std::size_t c = 0; c < kStanceCount; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (stance_index(labels[i]) == c) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx.begin(), idx.end());
    const auto n_test = static_cast<std::size_t>(std::lround(spec.test_fraction * static_cast<double>(idx.size())));
    const auto rest = idx.size() - n_test;
    const auto n_val = static_cast<std::size_t>(std::lround(spec.val_fraction_of_train * static_cast<double>(rest)));
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::pair<TfidfSpace, SparseMatrix> tfidf_fit_transform(const std::vector<std::string>& texts, NgramRange range) {
  auto space = TfidfSpace::fit(texts, range);
  auto X = space.transform(texts);
  return {std::move(space), std::move(X)};
}

// ---- logistic regression -------------------------------------------------------------

double logreg_objective(const SparseMatrix& X, const std::vector<std::size_t>& y, const Eigen::MatrixXd& W,
                        const Eigen::VectorXd& b, double C, Eigen::MatrixXd* grad_W, Eigen::VectorXd* grad_b) {
  Eigen::MatrixXd Z = X * W.transpose();
  Z.rowwise() += b.transpose();
  double f = 0.0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double m = Z.row(i).maxCoeff();
    const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    f += lse - Z(i, yi);
    Z.row(i) = (Z.row(i).array() - lse).exp().matrix();  // now P
    Z(i, yi) -= 1.0;                                     // now P - Y
  }
  f += W.squaredNorm() / (2.0 * C);
  if (grad_W) *grad_W = Z.transpose() * X + W / C;
  if (grad_b) *grad_b = Z.colwise().sum().transpose();
  return f;
}

StanceClassifier logreg_train(const SparseMatrix& X, const std::vector<Stance>& labels, const LogRegParams& params) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw Error("logreg: labels not aligned with features");
  if (!(params.C > 0.0)) throw Error("logreg: C must be positive");
  for (Eigen::Index k = 0; k < X.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(X, k); it; ++it) {
      if (!std::isfinite(it.value())) throw Error("logreg: non-finite feature value");
    }
  }
  std::vector<std::size_t> y;
  std::set<std::size_t> present;
  for (auto s : labels) {
    y.push_back(stance_index(s));
    present.insert(y.back());
  }
  if (present.size() < 2) throw Error("logreg needs at least two classes in the training labels");

  const Eigen::Index K = static_cast<Eigen::Index>(kStanceCount), F = X.cols(), P = K * F + K;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
  auto eval = [&](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
    Eigen::Map<const Eigen::MatrixXd> W(t.data(), K, F);
    Eigen::Map<const Eigen::VectorXd> b(t.data() + K * F, K);
    Eigen::MatrixXd gW;
    Eigen::VectorXd gb;
    double f = logreg_objective(X, y, W, b, params.C, &gW, &gb);
    g.resize(P);
    g.head(K * F) = Eigen::Map<const Eigen::VectorXd>(gW.data(), K * F);
    g.tail(K) = gb;
    return f;
  };

  StanceClassifier clf;
  clf.C = params.C;
  Eigen::VectorXd g;
  double f = eval(theta, g);
  clf.objective_trace.push_back(f);

  constexpr std::size_t kMemory = 10;
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;
  Eigen::VectorXd g_new;
  for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(S.size());
    for (std::size_t i = S.size(); i-- > 0;) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (!S.empty()) {
      q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    } else {
      q /= std::max(1.0, g.norm());
    }
    for (std::size_t i = 0; i < S.size(); ++i) {
      double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    Eigen::VectorXd d = -q;
    double slope = g.dot(d);
    if (slope >= 0.0) {
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
      S.clear();
      Y.clear();
      rho.clear();
    }
    // Armijo backtracking
    double step = 1.0, f_new = f;
    Eigen::VectorXd cand;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      cand = theta + step * d;
      f_new = eval(cand, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Eigen::VectorXd s = cand - theta, yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      S.push_back(s);
      Y.push_back(yv);
      rho.push_back(1.0 / sy);
      if (S.size() > kMemory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    const double improvement = f - f_new;
    theta = cand;
    g = g_new;
    f = f_new;
    clf.objective_trace.push_back(f);
    if (improvement < params.tolerance * std::max(1.0, std::abs(f))) break;
  }
  clf.weights = Eigen::Map<const Eigen::MatrixXd>(theta.data(), K, F);
  clf.bias = theta.tail(K);
  if (!clf.weights.allFinite() || !clf.bias.allFinite()) throw Error("logreg produced non-finite weights");
  return clf;
}

// ---- metrics -----------------------------------------------------------------------------

double macro_f1(const std::array<std::array<std::size_t, kStanceCount>, kStanceCount>& cm) {
  // Per class 2tp / (2tp + fp + fn): integer counts, one rounding.
  double sum = 0.0;
  for (std::size_t c = 0; c < kStanceCount; ++c) {
    std::size_t tp = cm[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < kStanceCount; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    const std::size_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(kStanceCount);
}

StanceMetrics metrics_from_predictions(const std::vector<Stance>& truth, const std::vector<Stance>& predicted) {
  if (truth.size() != predicted.size()) throw Error("stance metrics: prediction count differs from labels");
  StanceMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion[stance_index(truth[i])][stance_index(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  m.macro_f1 = macro_f1(m.confusion);
  return m;
}

StanceMetrics stance_evaluate(const StanceClassifier& clf, const SparseMatrix& X, const std::vector<Stance>& labels) {
  return metrics_from_predictions(labels, clf.predict(X));
}

// ---- variants -------------------------------------------------------------------------

namespace {

SparseMatrix hstack(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (SparseMatrix::InnerIterator it(b, r); it; ++it) trip.emplace_back(it.row(), a.cols() + it.col(), it.value());
  }
  SparseMatrix X(a.rows(), a.cols() + b.cols());
  X.setFromTriplets(trip.begin(), trip.end());
  return X;
}

}  // namespace

VariantFeatures VariantFeatures::fit(StanceVariant variant, const std::vector<std::string>& texts,
                                     const std::vector<std::string>& themes, NgramRange range) {
  VariantFeatures v;
  v.variant_ = variant;
  if (variant != StanceVariant::Theme) v.blocks_.push_back(TfidfSpace::fit(texts, range));
  if (variant != StanceVariant::Text) v.blocks_.push_back(TfidfSpace::fit(themes, range));
  return v;
}

SparseMatrix VariantFeatures::transform(const std::vector<std::string>& texts,
                                        const std::vector<std::string>& themes) const {
  switch (variant_) {
    case StanceVariant::Text: return blocks_[0].transform(texts);
    case StanceVariant::Theme: return blocks_[0].transform(themes);
    case StanceVariant::TextTheme: return hstack(blocks_[0].transform(texts), blocks_[1].transform(themes));
  }
  throw Error("unknown stance variant");
}

LabeledSet subset(const LabeledSet& data, const std::vector<std::size_t>& idx) {
  LabeledSet out;
  out.platform = data.platform;
  for (auto i : idx) {
    out.ids.push_back(data.ids.at(i));
    out.texts.push_back(data.texts.at(i));
    out.themes.push_back(data.themes.at(i));
    out.labels.push_back(data.labels.at(i));
  }
  return out;
}

Selection select_hyperparameters(StanceVariant variant, const LabeledSet& train, const LabeledSet& val,
                                 const StanceGrid& grid, const LogRegParams& base, std::size_t workers) {
  if (grid.ngram_ranges.empty() || grid.Cs.empty()) throw Error("stance grid must not be empty");
  if (val.labels.empty()) throw Error("validation split is empty");
  std::vector<Selection> points;
  for (const auto& r : grid.ngram_ranges)
    for (double c : grid.Cs) points.push_back({r, c, 0.0});
  detail::parallel_for(points.size(), workers, [&](std::size_t i) {
    auto feats = VariantFeatures::fit(variant, train.texts, train.themes, points[i].ngram);
    LogRegParams p = base;
    p.C = points[i].C;
    auto clf = logreg_train(feats.transform(train.texts, train.themes), train.labels, p);
    points[i].val_accuracy = stance_evaluate(clf, feats.transform(val.texts, val.themes), val.labels).accuracy;
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].val_accuracy > points[best].val_accuracy) best = i;
  }
  return points[best];
}

LabeledSet build_labeled_set(const Corpus& corpus, const ThemeAssignment& assignment, std::string platform) {
  std::map<std::string, std::string> theme_of;
  for (std::size_t i = 0; i < assignment.ids.size(); ++i) {
    if (assignment.labels[i]) theme_of[assignment.ids[i]] = *assignment.labels[i];
  }
  LabeledSet out;
  out.platform = std::move(platform);
  std::size_t skipped = 0;
  for (const auto& d : corpus.documents) {
    if (!d.stance) continue;
    auto it = theme_of.find(d.id);
    if (it == theme_of.end()) {
      ++skipped;
      continue;
    }
    out.ids.push_back(d.id);
    out.texts.push_back(d.text);
    out.themes.push_back(it->second);
    out.labels.push_back(*d.stance);
  }
  if (skipped > 0) spdlog::warn("{} stance-labeled documents have no assigned theme and were skipped", skipped);
  if (out.labels.empty()) throw Error("no stance-labeled documents with an assigned theme");
  return out;
}

std::vector<VariantResult> run_variants(const LabeledSet& data, const SplitSpec& spec, const StanceGrid& grid,
                                        const LogRegParams& base, std::size_t workers) {
  const auto split = stratified_split(data.labels, spec);
  const auto train = subset(data, split.train), val = subset(data, split.val), test = subset(data, split.test);
  std::vector<std::size_t> fit_idx = split.train;
  fit_idx.insert(fit_idx.end(), split.val.begin(), split.val.end());
  std::sort(fit_idx.begin(), fit_idx.end());
  const auto fit_set = subset(data, fit_idx);
  if (test.labels.empty()) throw Error("test split is empty");

  std::vector<VariantResult> out;
  for (auto variant : {StanceVariant::Text, StanceVariant::Theme, StanceVariant::TextTheme}) {
    auto sel = select_hyperparameters(variant, train, val, grid, base, workers);
    auto feats = VariantFeatures::fit(variant, fit_set.texts, fit_set.themes, sel.ngram);
    LogRegParams p = base;
    p.C = sel.C;
    auto clf = logreg_train(feats.transform(fit_set.texts, fit_set.themes), fit_set.labels, p);
    out.push_back({variant, sel.ngram, sel.C, sel.val_accuracy,
                   stance_evaluate(clf, feats.transform(test.texts, test.themes), test.labels)});
  }
  return out;
}

std::vector<ResultRow> llm_stance_rows(Gateway& gateway, const LabeledSet& data, const SplitSpec& spec,
                                       std::size_t workers) {
  const auto test = subset(data, stratified_split(data.labels, spec).test);
  std::vector<ResultRow> rows;
  for (auto variant : {StanceVariant::Text, StanceVariant::Theme, StanceVariant::TextTheme}) {
    std::vector<std::optional<Stance>> pred(test.labels.size());
    detail::parallel_for(test.labels.size(), workers, [&](std::size_t i) {
      std::optional<std::string> text, theme;
      if (variant != StanceVariant::Theme) text = test.texts[i];
      if (variant != StanceVariant::Text) theme = test.themes[i];
      try {
        pred[i] = gateway.predict_stance_llm(text, theme, variant);
      } catch (const ParseError& e) {
        spdlog::warn("stance for '{}' unparseable: {}", test.ids[i], e.what());
      }
    });
    std::vector<Stance> truth, got;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!pred[i]) continue;
      truth.push_back(test.labels[i]);
      got.push_back(*pred[i]);
    }
    auto m = metrics_from_predictions(truth, got);
    rows.push_back({"LLM", std::string(to_string(variant)), data.platform, m.accuracy, m.macro_f1});
  }
  return rows;
}

std::vector<ResultRow> result_rows(const std::vector<VariantResult>& results, const std::string& platform) {
  std::vector<ResultRow> rows;
  for (const auto& r : results) {
    rows.push_back({"LogReg", std::string(to_string(r.variant)), platform, r.test.accuracy, r.test.macro_f1});
  }
  return rows;
}

std::string results_to_csv(const std::vector<ResultRow>& rows, const std::string& fingerprint) {
  std::string out = "# fingerprint=" + fingerprint + "\n" + util::csv_row({"model", "variant", "platform", "Acc", "F1"});
  for (const auto& r : rows) {
    out += util::csv_row({r.model, r.variant, r.platform, util::format_double(r.accuracy), util::format_double(r.f1)});
  }
  return out;
}

}  // namespace stance
}  // namespace themescope
