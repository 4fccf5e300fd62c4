#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "annotation.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "svm.hpp"
#include "textprep.hpp"

namespace crowdlabel {

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline ConfusionMatrix confusion(std::span<const BinaryClass> pred, std::span<const BinaryClass> truth) {
  if (pred.size() != truth.size()) throw InputError("prediction and truth lengths differ");
  if (pred.empty()) throw InputError("confusion matrix of an empty list");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == BinaryClass::positive;
    const bool t = truth[i] == BinaryClass::positive;
    if (p && t) ++m.tp;
    else if (p) ++m.fp;
    else if (t) ++m.fn;
    else ++m.tn;
  }
  return m;
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (midrank Mann-Whitney). nullopt when a class is absent.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const BinaryClass> truth) {
  if (scores.size() != truth.size()) throw InputError("score and truth lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (truth[order[t]] == BinaryClass::positive) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

/// Sum over distinct score thresholds (descending) of (R_k - R_{k-1}) * P_k.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const BinaryClass> truth) {
  if (scores.size() != truth.size()) throw InputError("score and truth lengths differ");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto t : truth) n_pos += t == BinaryClass::positive;
  if (n_pos == 0 || n_pos == n) return std::nullopt;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += truth[order[j]] == BinaryClass::positive;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double f1_weighted = 0.0;
  std::optional<double> roc_auc;            // nullopt: a class is absent
  std::optional<double> average_precision;  // nullopt: a class is absent

  static constexpr std::array<std::string_view, 7> kNames{
      "accuracy", "precision", "recall", "f1", "f1_weighted", "roc_auc", "average_precision"};

  std::optional<double> get(std::string_view name) const {
    if (name == "accuracy") return accuracy;
    if (name == "precision") return precision;
    if (name == "recall") return recall;
    if (name == "f1") return f1;
    if (name == "f1_weighted") return f1_weighted;
    if (name == "roc_auc") return roc_auc;
    if (name == "average_precision") return average_precision;
    throw InputError("unknown metric '" + std::string(name) + "'");
  }
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_of(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = ratio(tp, tp + fp);
  const double r = ratio(tp, tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace detail

/// Threshold metrics on the positive class (score > threshold predicts
/// positive) plus the two ranking metrics.
inline MetricsReport metrics(std::span<const double> scores, std::span<const BinaryClass> truth,
                             double threshold = 0.0) {
  if (scores.size() != truth.size()) throw InputError("score and truth lengths differ");
  if (scores.empty()) throw InputError("metrics of an empty list");
  std::vector<BinaryClass> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    pred[i] = scores[i] > threshold ? BinaryClass::positive : BinaryClass::negative;
  }
  const auto m = confusion(pred, truth);
  MetricsReport r;
  r.accuracy = detail::ratio(m.tp + m.tn, m.total());
  r.precision = detail::ratio(m.tp, m.tp + m.fp);
  r.recall = detail::ratio(m.tp, m.tp + m.fn);
  r.f1 = detail::f1_of(m.tp, m.fp, m.fn);
  const double f1_neg = detail::f1_of(m.tn, m.fn, m.fp);
  const std::size_t n_pos = m.tp + m.fn, n_neg = m.tn + m.fp;
  r.f1_weighted = (static_cast<double>(n_pos) * r.f1 + static_cast<double>(n_neg) * f1_neg) /
                  static_cast<double>(m.total());
  r.roc_auc = roc_auc(scores, truth);
  r.average_precision = average_precision(scores, truth);
  return r;
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t count = 0;
};

/// Unweighted mean and sample std per metric; undefined values are skipped.
inline std::map<std::string, MetricSummary> summarize(std::span<const MetricsReport> reports) {
  std::map<std::string, MetricSummary> out;
  for (auto name : MetricsReport::kNames) {
    std::vector<double> vals;
    for (const auto& r : reports) {
      if (auto v = r.get(name)) vals.push_back(*v);
    }
    MetricSummary s;
    s.count = vals.size();
    if (!vals.empty()) {
      double sum = 0.0;
      for (double v : vals) sum += v;
      s.mean = sum / static_cast<double>(vals.size());
      const bool constant = std::all_of(vals.begin(), vals.end(), [&](double v) { return v == vals.front(); });
      if (constant) {
        s.mean = vals.front();  // exact, where sum / n may round
      } else if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      }
    }
    out.emplace(std::string(name), s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified folds.
// ---------------------------------------------------------------------------

struct FoldPlan {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignments;

  std::size_t fold_of(const std::string& id) const {
    auto it = assignments.find(id);
    if (it == assignments.end()) throw InputError("item '" + id + "' is not in the fold plan");
    return it->second;
  }
};

/// Per-class seeded shuffle, then round-robin over folds; the fold counter
/// carries over from the positive to the negative class so total fold sizes
/// also differ by at most one.
inline FoldPlan stratified_kfold(std::span<const std::pair<std::string, BinaryClass>> items, std::size_t k,
                                 std::uint64_t seed) {
  if (k < 2) throw InputError("k must be at least 2");
  if (k > items.size()) {
    throw InputError("k = " + std::to_string(k) + " exceeds the number of items (" + std::to_string(items.size()) + ")");
  }
  std::array<std::vector<std::string>, 2> by_class;
  std::set<std::string> seen;
  for (const auto& [id, y] : items) {
    if (!seen.insert(id).second) throw InputError("duplicate item '" + id + "' in fold input");
    by_class[y == BinaryClass::positive ? 0 : 1].push_back(id);
  }
  FoldPlan plan{k, {}};
  Rng rng(substream_seed(seed, "folds"));
  std::size_t next = 0;
  for (auto& ids : by_class) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(std::span<std::string>(ids));
    for (const auto& id : ids) {
      plan.assignments.emplace(id, next);
      next = (next + 1) % k;
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Cross-validation over text documents.
// ---------------------------------------------------------------------------

/// One labeled message reduced to its n-gram set.
struct Document {
  std::string id;
  std::vector<std::string> ngrams;  // sorted, unique
  BinaryClass label = BinaryClass::negative;
};

inline Document make_document(std::string id, const TokenStream& tokens, BinaryClass label) {
  return {std::move(id), ngram_set(tokens), label};
}

struct PipelineConfig {
  std::size_t vocab_size = kDefaultVocabularySize;
  TrainConfig train;
};

/// Vocabulary, model and scores for one train/test split.
struct SplitFit {
  Vocabulary vocab;
  LinearModel model;
  std::vector<double> train_scores;
  std::vector<BinaryClass> train_truth;
  std::vector<double> test_scores;
  std::vector<BinaryClass> test_truth;
};

inline SplitFit fit_split(std::span<const Document* const> train_docs, std::span<const Document* const> test_docs,
                          const PipelineConfig& config) {
  if (train_docs.empty()) throw InputError("empty training split");
  SplitFit fit;
  std::vector<const std::vector<std::string>*> sets;
  sets.reserve(train_docs.size());
  for (const auto* d : train_docs) sets.push_back(&d->ngrams);
  fit.vocab = build_vocabulary_from_sets(sets, config.vocab_size);

  std::vector<FeatureVector> rows;
  rows.reserve(train_docs.size());
  for (const auto* d : train_docs) {
    rows.push_back(vectorize_set(d->ngrams, fit.vocab));
    fit.train_truth.push_back(d->label);
  }
  fit.model = train(rows, fit.train_truth, config.train);
  for (const auto& r : rows) fit.train_scores.push_back(decision_function(fit.model, r));
  for (const auto* d : test_docs) {
    fit.test_scores.push_back(decision_function(fit.model, vectorize_set(d->ngrams, fit.vocab)));
    fit.test_truth.push_back(d->label);
  }
  return fit;
}

namespace detail {

inline void check_plan(std::span<const Document> docs, const FoldPlan& plan) {
  if (plan.assignments.size() != docs.size()) throw InputError("fold plan does not cover the variant's items");
  for (const auto& d : docs) {
    auto it = plan.assignments.find(d.id);
    if (it == plan.assignments.end()) throw InputError("item '" + d.id + "' is missing from the fold plan");
    if (it->second >= plan.k) throw InputError("fold index out of range for '" + d.id + "'");
  }
}

}  // namespace detail

/// Fit on every fold but `fold`, score `fold`. The vocabulary only ever sees
/// training documents.
inline SplitFit fit_fold(std::span<const Document> docs, const FoldPlan& plan, std::size_t fold,
                         const PipelineConfig& config) {
  std::vector<const Document*> train_docs, test_docs;
  for (const auto& d : docs) (plan.fold_of(d.id) == fold ? test_docs : train_docs).push_back(&d);
  return fit_split(train_docs, test_docs, config);
}

struct CrossValidation {
  std::vector<MetricsReport> folds;
  std::vector<std::size_t> test_sizes;
  std::map<std::string, MetricSummary> summary;
};

inline CrossValidation cross_validate(std::span<const Document> docs, const FoldPlan& plan,
                                      const PipelineConfig& config, std::size_t jobs = 1) {
  detail::check_plan(docs, plan);
  CrossValidation cv;
  cv.folds.resize(plan.k);
  cv.test_sizes.resize(plan.k);
  parallel_for(plan.k, jobs, [&](std::size_t f) {
    auto fit = fit_fold(docs, plan, f, config);
    if (fit.test_scores.empty()) throw InputError("fold " + std::to_string(f) + " has no test items");
    cv.folds[f] = metrics(fit.test_scores, fit.test_truth);
    cv.test_sizes[f] = fit.test_scores.size();
  });
  cv.summary = summarize(cv.folds);
  return cv;
}

// ---------------------------------------------------------------------------
// Class-weight grid search.
// ---------------------------------------------------------------------------

struct ClassWeights {
  double pos = 1.0;
  double neg = 1.0;
};

inline std::vector<ClassWeights> default_grid() {
  return {{1, 1}, {2, 1}, {4, 1}, {8, 1}, {16, 1}, {32, 1}};
}

struct GridPoint {
  ClassWeights weights;
  std::optional<double> mean_auc;
};

struct GridSearchResult {
  std::vector<GridPoint> table;
  std::size_t best_index = 0;
  TrainConfig best;
};

/// Mean fold ROC AUC per grid point on a shared fold plan. Ties go to the
/// smaller pos/neg ratio, then to grid order.
inline GridSearchResult grid_search_class_weights(std::span<const Document> docs, std::span<const ClassWeights> grid,
                                                  const FoldPlan& plan, const PipelineConfig& base,
                                                  std::size_t jobs = 1) {
  if (grid.empty()) throw InputError("empty class-weight grid");
  detail::check_plan(docs, plan);
  const std::size_t k = plan.k;
  std::vector<std::optional<double>> auc(grid.size() * k);
  parallel_for(grid.size() * k, jobs, [&](std::size_t task) {
    PipelineConfig cfg = base;
    cfg.train.class_weight_pos = grid[task / k].pos;
    cfg.train.class_weight_neg = grid[task / k].neg;
    auto fit = fit_fold(docs, plan, task % k, cfg);
    auc[task] = roc_auc(fit.test_scores, fit.test_truth);
  });
  GridSearchResult result;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < k; ++f) {
      if (auto a = auc[g * k + f]) sum += *a, ++count;
    }
    GridPoint p{grid[g], std::nullopt};
    if (count > 0) p.mean_auc = sum / static_cast<double>(count);
    result.table.push_back(p);
  }
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < result.table.size(); ++g) {
    const auto& p = result.table[g];
    if (!p.mean_auc) continue;
    if (!best) {
      best = g;
      continue;
    }
    const auto& q = result.table[*best];
    const double diff = *p.mean_auc - *q.mean_auc;
    if (diff > 1e-12) {
      best = g;
    } else if (std::abs(diff) <= 1e-12 && p.weights.pos / p.weights.neg < q.weights.pos / q.weights.neg) {
      best = g;
    }
  }
  result.best_index = best.value_or(0);
  result.best = base.train;
  result.best.class_weight_pos = grid[result.best_index].pos;
  result.best.class_weight_neg = grid[result.best_index].neg;
  return result;
}

// ---------------------------------------------------------------------------
// Learning curves.
// ---------------------------------------------------------------------------

struct LearningCurvePoint {
  double fraction = 0.0;
  std::size_t train_size = 0;  // mean training-subset size over folds, rounded
  double train_score = 0.0;    // mean ROC AUC on the training subset
  double cv_score = 0.0;       // mean ROC AUC on the held-out fold
};

struct LearningCurve {
  std::vector<LearningCurvePoint> points;
  std::vector<std::string> warnings;
};

inline std::vector<double> default_fractions() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

/// For each fraction and fold, trains on a seeded stratified prefix of the
/// fold's training split (the prefixes are nested across fractions) and
/// scores both the subset itself and the held-out fold.
inline LearningCurve learning_curve(std::span<const Document> docs, const FoldPlan& plan,
                                    std::span<const double> fractions, const PipelineConfig& config,
                                    std::uint64_t seed, std::size_t jobs = 1) {
  if (fractions.empty()) throw InputError("no learning-curve fractions");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw InputError("fractions must lie in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1])) throw InputError("fractions must be increasing");
  }
  detail::check_plan(docs, plan);
  const std::size_t k = plan.k;

  // Per fold: training indices by class, in a seeded order.
  std::vector<std::array<std::vector<std::size_t>, 2>> shuffled(k);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (plan.fold_of(docs[i].id) != f) {
        shuffled[f][docs[i].label == BinaryClass::positive ? 0 : 1].push_back(i);
      }
    }
    Rng rng(substream_seed(seed, "curve/" + std::to_string(f)));
    for (auto& cls : shuffled[f]) rng.shuffle(std::span<std::size_t>(cls));
  }

  struct Cell {
    bool ok = false;
    std::size_t size = 0;
    std::optional<double> train_auc, test_auc;
  };
  std::vector<Cell> cells(fractions.size() * k);
  parallel_for(cells.size(), jobs, [&](std::size_t task) {
    const double frac = fractions[task / k];
    const std::size_t f = task % k;
    std::vector<std::size_t> chosen;
    for (const auto& cls : shuffled[f]) {
      const auto take = static_cast<std::size_t>(std::floor(frac * static_cast<double>(cls.size()) + 1e-9));
      if (take == 0) return;
      chosen.insert(chosen.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<const Document*> train_docs, test_docs;
    for (auto i : chosen) train_docs.push_back(&docs[i]);
    for (const auto& d : docs) {
      if (plan.fold_of(d.id) == f) test_docs.push_back(&d);
    }
    auto fit = fit_split(train_docs, test_docs, config);
    cells[task] = {true, chosen.size(), roc_auc(fit.train_scores, fit.train_truth),
                   roc_auc(fit.test_scores, fit.test_truth)};
  });

  LearningCurve curve;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    bool ok = true;
    double size_sum = 0.0, train_sum = 0.0, test_sum = 0.0;
    std::size_t train_n = 0, test_n = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const auto& c = cells[fi * k + f];
      ok = ok && c.ok;
      size_sum += static_cast<double>(c.size);
      if (c.train_auc) train_sum += *c.train_auc, ++train_n;
      if (c.test_auc) test_sum += *c.test_auc, ++test_n;
    }
    if (!ok || train_n == 0 || test_n == 0) {
      curve.warnings.push_back("fraction " + fmt_real(fractions[fi], 2) +
                               " skipped: fewer than one training example per class");
      continue;
    }
    curve.points.push_back({fractions[fi], static_cast<std::size_t>(std::llround(size_sum / static_cast<double>(k))),
                            train_sum / static_cast<double>(train_n), test_sum / static_cast<double>(test_n)});
  }
  return curve;
}

}  // namespace crowdlabel
