#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "svm.hpp"
#include "textprep.hpp"

namespace crowdlabel {

inline constexpr std::size_t kTopFeatures = 20;

struct ExperimentConfig {
  fs::path corpus_path;
  fs::path annotations_path;
  fs::path ruleset_path;
  fs::path lexicon_path;
  std::size_t vocab_size = kDefaultVocabularySize;
  std::size_t k = 10;
  std::uint64_t seed = 1;
  double reg_c = 1.0;
  std::vector<ClassWeights> grid = default_grid();
  std::vector<VariantName> variants{kVariants.begin(), kVariants.end()};
  fs::path output_dir = "out";
  std::size_t jobs = 0;  // 0: hardware concurrency; never part of the hash

  void validate() const {
    for (const auto& [name, p] : {std::pair<const char*, const fs::path*>{"corpus", &corpus_path},
                                  {"annotations", &annotations_path},
                                  {"rules", &ruleset_path},
                                  {"lexicon", &lexicon_path}}) {
      if (p->empty()) throw InputError(std::string("missing ") + name + " path");
      if (!fs::exists(*p)) throw InputError(std::string(name) + " file not found: " + p->string());
    }
    if (vocab_size < 1) throw InputError("vocab_size must be at least 1");
    if (k < 2) throw InputError("k must be at least 2");
    if (grid.empty()) throw InputError("class-weight grid is empty");
    for (const auto& w : grid) {
      if (!(w.pos > 0.0 && w.neg > 0.0)) throw InputError("class weights must be positive");
    }
    if (variants.empty()) throw InputError("no variants requested");
    if (!(reg_c > 0.0)) throw InputError("reg_c must be positive");
  }

  std::size_t effective_jobs() const { return jobs == 0 ? default_jobs() : jobs; }
};

namespace experiment_detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!part.empty()) out.push_back(part);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::uint64_t parse_uint(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw InputError(std::string(key) + ": expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw InputError(std::string(key) + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

inline double parse_real(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw InputError(std::string(key) + ": expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw InputError(std::string(key) + ": expected a number, got '" + v + "'");
  return x;
}

}  // namespace experiment_detail

/// Grid syntax: comma-separated `pos:neg` pairs, e.g. `1:1,2:1,4:1`.
inline std::vector<ClassWeights> parse_grid(std::string_view text) {
  using namespace experiment_detail;
  std::vector<ClassWeights> grid;
  for (const auto& pair : split(text, ',')) {
    auto parts = split(pair, ':');
    if (parts.size() != 2) throw InputError("grid entry '" + pair + "' is not pos:neg");
    grid.push_back({parse_real("grid", parts[0]), parse_real("grid", parts[1])});
    if (!(grid.back().pos > 0.0 && grid.back().neg > 0.0)) throw InputError("grid entry '" + pair + "' is not positive");
  }
  if (grid.empty()) throw InputError("class-weight grid is empty");
  return grid;
}

inline std::string format_grid(std::span<const ClassWeights> grid) {
  std::string out;
  for (const auto& w : grid) {
    if (!out.empty()) out += ',';
    out += fmt_real(w.pos, 4) + ':' + fmt_real(w.neg, 4);
  }
  return out;
}

inline std::vector<VariantName> parse_variants(std::string_view text) {
  std::vector<VariantName> out;
  for (const auto& name : experiment_detail::split(text, ',')) {
    const auto v = parse_variant(name);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  if (out.empty()) throw InputError("no variants requested");
  std::sort(out.begin(), out.end());
  return out;
}

/// Applies one `key = value` setting; the same keys serve the config file and
/// the command-line overrides.
inline void apply_setting(ExperimentConfig& cfg, std::string_view key, const std::string& value) {
  using namespace experiment_detail;
  if (key == "corpus" || key == "corpus_path") cfg.corpus_path = value;
  else if (key == "annotations" || key == "annotations_path") cfg.annotations_path = value;
  else if (key == "rules" || key == "ruleset" || key == "ruleset_path") cfg.ruleset_path = value;
  else if (key == "lexicon" || key == "lexicon_path") cfg.lexicon_path = value;
  else if (key == "vocab_size") cfg.vocab_size = parse_uint(key, value);
  else if (key == "k") cfg.k = parse_uint(key, value);
  else if (key == "seed") cfg.seed = parse_uint(key, value);
  else if (key == "reg_c") cfg.reg_c = parse_real(key, value);
  else if (key == "grid") cfg.grid = parse_grid(value);
  else if (key == "variants") cfg.variants = parse_variants(value);
  else if (key == "output_dir" || key == "out") cfg.output_dir = value;
  else if (key == "jobs") cfg.jobs = parse_uint(key, value);
  else throw InputError("unknown config key '" + std::string(key) + "'");
}

/// Key-value config file: `key = value` per line, `#` comments. Relative
/// paths resolve against the file's directory.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "<config>",
                                     const fs::path& base_dir = {}, ExperimentConfig cfg = {}) {
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    auto text = experiment_detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source_name, lineno, "expected key = value");
    const auto key = experiment_detail::trim(std::string_view(text).substr(0, eq));
    auto value = experiment_detail::trim(std::string_view(text).substr(eq + 1));
    try {
      const bool is_path = key == "corpus" || key == "corpus_path" || key == "annotations" ||
                           key == "annotations_path" || key == "rules" || key == "ruleset" || key == "ruleset_path" ||
                           key == "lexicon" || key == "lexicon_path" || key == "output_dir" || key == "out";
      if (is_path && !base_dir.empty() && fs::path(value).is_relative()) value = (base_dir / value).string();
      apply_setting(cfg, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path, ExperimentConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  return parse_config(in, path.string(), path.parent_path(), std::move(cfg));
}

/// Canonical text of every hashed setting (output_dir and jobs excluded).
inline std::string canonical_settings(const ExperimentConfig& cfg) {
  std::string variants;
  for (auto v : cfg.variants) {
    if (!variants.empty()) variants += ',';
    variants += to_string(v);
  }
  std::ostringstream s;
  s << "vocab_size=" << cfg.vocab_size << "\nk=" << cfg.k << "\nseed=" << cfg.seed << "\nreg_c=" << fmt_real(cfg.reg_c, 9)
    << "\ngrid=" << format_grid(cfg.grid) << "\nvariants=" << variants << '\n';
  return s.str();
}

/// FNV-1a over the settings and the bytes of every input file.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = fnv1a64(canonical_settings(cfg));
  for (const auto* p : {&cfg.corpus_path, &cfg.annotations_path, &cfg.ruleset_path, &cfg.lexicon_path}) {
    const auto bytes = read_file(*p);
    h = fnv1a64(std::to_string(bytes.size()) + ":", h);
    h = fnv1a64(bytes, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> variants;
  for (auto v : cfg.variants) variants.emplace_back(to_string(v));
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& w : cfg.grid) grid.push_back({w.pos, w.neg});
  return {{"corpus", cfg.corpus_path.filename().string()},
          {"annotations", cfg.annotations_path.filename().string()},
          {"rules", cfg.ruleset_path.filename().string()},
          {"lexicon", cfg.lexicon_path.filename().string()},
          {"vocab_size", cfg.vocab_size},
          {"k", cfg.k},
          {"seed", cfg.seed},
          {"reg_c", cfg.reg_c},
          {"grid", grid},
          {"variants", variants}};
}

// ---------------------------------------------------------------------------
// Inputs.
// ---------------------------------------------------------------------------

struct ExperimentInputs {
  std::vector<Message> corpus;
  std::vector<Annotation> annotations;
  RuleSet rules;
  Lemmatizer lemmatizer;
};

/// Every annotated item must exist in the corpus; the first offender is named.
inline void check_references(std::span<const Message> corpus, std::span<const Annotation> annotations) {
  std::set<std::string_view> ids;
  for (const auto& m : corpus) ids.insert(m.id);
  for (const auto& a : annotations) {
    if (!ids.count(a.item_id)) throw InputError("annotation refers to unknown item_id '" + a.item_id + "'");
  }
}

inline ExperimentInputs load_inputs(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentInputs in{load_corpus(cfg.corpus_path), load_annotations(cfg.annotations_path),
                      load_ruleset(cfg.ruleset_path), Lemmatizer::load(cfg.lexicon_path)};
  check_references(in.corpus, in.annotations);
  return in;
}

/// Document per gold item, binarized; n-gram sets are cached by item id.
inline std::vector<Document> variant_documents(const DatasetVariant& variant,
                                               const std::map<std::string, std::vector<std::string>>& ngrams) {
  std::vector<Document> docs;
  docs.reserve(variant.items.size());
  for (const auto& g : variant.items) {
    auto it = ngrams.find(g.item_id);
    if (it == ngrams.end()) throw InputError("gold item '" + g.item_id + "' is not in the corpus");
    docs.push_back({g.item_id, it->second, binarize(g.label)});
  }
  return docs;
}

inline std::map<std::string, std::vector<std::string>> corpus_ngrams(std::span<const Message> corpus,
                                                                     const Lemmatizer& lemmatizer,
                                                                     const std::set<std::string>& wanted) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& m : corpus) {
    if (wanted.count(m.id)) out.emplace(m.id, ngram_set(prepare(m.anon_text, lemmatizer)));
  }
  return out;
}

inline std::string fold_plan_hash(const FoldPlan& plan) {
  std::uint64_t h = fnv1a64("k=" + std::to_string(plan.k));
  for (const auto& [id, f] : plan.assignments) h = fnv1a64(id + "=" + std::to_string(f) + ";", h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Per-variant pipeline.
// ---------------------------------------------------------------------------

struct VariantResult {
  VariantName name = VariantName::R1S;
  std::size_t items = 0, positives = 0, negatives = 0;
  bool skipped = false;
  std::string skip_reason;
  std::string fold_plan_hash;
  GridSearchResult grid;
  CrossValidation cv;
  LearningCurve curve;
  LinearModel model;
  TopFeatures top;
  std::size_t vocabulary = 0;
  std::vector<GoldLabel> gold;
};

inline VariantResult run_variant(const DatasetVariant& variant, std::span<const Document> docs,
                                 const ExperimentConfig& cfg) {
  VariantResult r;
  r.name = variant.name;
  r.gold = variant.items;
  r.items = docs.size();
  for (const auto& d : docs) (d.label == BinaryClass::positive ? r.positives : r.negatives) += 1;
  if (r.positives < cfg.k || r.negatives < cfg.k) {
    r.skipped = true;
    r.skip_reason = "fewer than k=" + std::to_string(cfg.k) + " items in a class (" + std::to_string(r.positives) +
                    " positive, " + std::to_string(r.negatives) + " negative)";
    return r;
  }
  const std::size_t jobs = cfg.effective_jobs();
  std::vector<std::pair<std::string, BinaryClass>> items;
  for (const auto& d : docs) items.emplace_back(d.id, d.label);
  const auto plan = stratified_kfold(items, cfg.k, cfg.seed);
  r.fold_plan_hash = fold_plan_hash(plan);

  PipelineConfig base;
  base.vocab_size = cfg.vocab_size;
  base.train.reg_c = cfg.reg_c;
  base.train.seed = cfg.seed;
  r.grid = grid_search_class_weights(docs, cfg.grid, plan, base, jobs);

  PipelineConfig best = base;
  best.train = r.grid.best;
  r.cv = cross_validate(docs, plan, best, jobs);
  const auto fractions = default_fractions();
  r.curve = learning_curve(docs, plan, fractions, best, cfg.seed, jobs);

  std::vector<const Document*> all;
  for (const auto& d : docs) all.push_back(&d);
  auto fit = fit_split(all, {}, best);
  r.model = std::move(fit.model);
  r.vocabulary = fit.vocab.size();
  r.top = top_features(r.model, fit.vocab, kTopFeatures);
  return r;
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

inline void write_metrics_csv(std::ostream& out, const VariantResult& r) {
  const auto model = model_name(r.name);
  out << "model,metric,value\n";
  for (auto name : MetricsReport::kNames) {
    auto it = r.cv.summary.find(std::string(name));
    if (it == r.cv.summary.end() || it->second.count == 0) continue;
    out << model << ',' << name << ',' << fmt_real(it->second.mean) << '\n';
    out << model << ',' << name << "_std," << fmt_real(it->second.std) << '\n';
  }
}

inline void write_learning_curve_csv(std::ostream& out, const VariantResult& r) {
  const auto model = model_name(r.name);
  out << "model,train_size,train_score,cv_score\n";
  for (const auto& p : r.curve.points) {
    out << model << ',' << p.train_size << ',' << fmt_real(p.train_score) << ',' << fmt_real(p.cv_score) << '\n';
  }
}

inline void write_top_features_csv(std::ostream& out, const VariantResult& r) {
  const auto model = model_name(r.name);
  out << "model,class,rank,ngram,weight\n";
  auto rows = [&](std::string_view cls, const auto& list) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      out << model << ',' << cls << ',' << (i + 1) << ',' << csv_field(list[i].first) << ','
          << fmt_real(list[i].second) << '\n';
    }
  };
  rows("positive", r.top.positive);
  rows("negative", r.top.negative);
}

inline void write_variant_summary_csv(std::ostream& out, std::span<const VariantResult> results) {
  out << "variant,model,status,items,positives,negatives,class_weight_pos,class_weight_neg,"
         "roc_auc,roc_auc_std,average_precision,precision,recall,f1,f1_weighted,accuracy\n";
  for (const auto& r : results) {
    out << to_string(r.name) << ',' << model_name(r.name) << ',' << (r.skipped ? "skipped" : "trained") << ','
        << r.items << ',' << r.positives << ',' << r.negatives;
    if (r.skipped) {
      out << ",,,,,,,,,,\n";
      continue;
    }
    auto mean = [&](const char* name) {
      auto it = r.cv.summary.find(name);
      return it == r.cv.summary.end() || it->second.count == 0 ? std::string() : fmt_real(it->second.mean);
    };
    auto sd = [&](const char* name) {
      auto it = r.cv.summary.find(name);
      return it == r.cv.summary.end() || it->second.count == 0 ? std::string() : fmt_real(it->second.std);
    };
    out << ',' << fmt_real(r.grid.best.class_weight_pos, 4) << ',' << fmt_real(r.grid.best.class_weight_neg, 4) << ','
        << mean("roc_auc") << ',' << sd("roc_auc") << ',' << mean("average_precision") << ',' << mean("precision")
        << ',' << mean("recall") << ',' << mean("f1") << ',' << mean("f1_weighted") << ',' << mean("accuracy") << '\n';
  }
}

inline nlohmann::json variant_manifest(const VariantResult& r, const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json j = {{"variant", std::string(to_string(r.name))},
                      {"model", model_name(r.name)},
                      {"seed", seed},
                      {"config_hash", config_hash},
                      {"items", r.items},
                      {"positives", r.positives},
                      {"negatives", r.negatives},
                      {"status", r.skipped ? "skipped" : "trained"}};
  if (r.skipped) {
    j["skip_reason"] = r.skip_reason;
    return j;
  }
  j["fold_plan_hash"] = r.fold_plan_hash;
  j["vocabulary_size"] = r.vocabulary;
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& p : r.grid.table) {
    grid.push_back({{"class_weight_pos", p.weights.pos},
                    {"class_weight_neg", p.weights.neg},
                    {"mean_roc_auc", p.mean_auc ? nlohmann::json(*p.mean_auc) : nlohmann::json(nullptr)}});
  }
  j["grid"] = grid;
  j["selected"] = {{"class_weight_pos", r.grid.best.class_weight_pos},
                   {"class_weight_neg", r.grid.best.class_weight_neg}};
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, s] : r.cv.summary) {
    if (s.count == 0) metrics[name] = nullptr;
    else metrics[name] = {{"mean", s.mean}, {"std", s.std}, {"folds", s.count}};
  }
  j["metrics"] = metrics;
  j["learning_curve_warnings"] = r.curve.warnings;
  j["final_model"] = {{"bias", r.model.bias}, {"objective", r.model.objective_value}, {"epochs", r.model.epochs}};
  return j;
}

struct ExperimentReport {
  std::string config_hash;
  Aggregation aggregation;
  std::vector<VariantResult> variants;
  nlohmann::json manifest;
};

inline std::string render(const auto& writer) {
  std::ostringstream s;
  writer(s);
  return s.str();
}

/// Runs the full workflow and writes the report tree under cfg.output_dir.
/// Outputs carry no timestamps, so identical inputs give identical bytes.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto inputs = load_inputs(cfg);
  ExperimentReport report;
  report.config_hash = config_hash(cfg);
  report.aggregation = aggregate(inputs.annotations);
  const auto& agg = report.aggregation;

  std::set<std::string> wanted;
  std::vector<DatasetVariant> variants;
  for (auto name : cfg.variants) {
    variants.push_back(build_variant(name, agg));
    for (const auto& g : variants.back().items) wanted.insert(g.item_id);
  }
  const auto ngrams = corpus_ngrams(inputs.corpus, inputs.lemmatizer, wanted);
  for (const auto& v : variants) {
    const auto docs = variant_documents(v, ngrams);
    report.variants.push_back(run_variant(v, docs, cfg));
  }

  std::size_t matched = 0;
  for (const auto& m : inputs.corpus) matched += filter_match(inputs.rules, m).matched ? 1 : 0;

  fs::create_directories(cfg.output_dir);
  nlohmann::json variants_json = nlohmann::json::array();
  for (const auto& r : report.variants) {
    auto vm = variant_manifest(r, report.config_hash, cfg.seed);
    variants_json.push_back({{"variant", vm["variant"]}, {"status", vm["status"]}, {"items", r.items}});
    if (r.skipped) {
      variants_json.back()["skip_reason"] = r.skip_reason;
      continue;
    }
    const fs::path dir = cfg.output_dir / std::string(to_string(r.name));
    fs::create_directories(dir);
    write_file_atomic(dir / "metrics.csv", render([&](std::ostream& o) { write_metrics_csv(o, r); }));
    write_file_atomic(dir / "learning_curve.csv", render([&](std::ostream& o) { write_learning_curve_csv(o, r); }));
    write_file_atomic(dir / "top_features.csv", render([&](std::ostream& o) { write_top_features_csv(o, r); }));
    write_file_atomic(dir / "gold_labels.csv", render([&](std::ostream& o) { write_gold_csv(o, r.gold); }));
    write_file_atomic(dir / "manifest.json", vm.dump(2) + "\n");
  }
  write_file_atomic(cfg.output_dir / "variant_summary.csv",
                    render([&](std::ostream& o) { write_variant_summary_csv(o, report.variants); }));

  nlohmann::json annotation_summary = {{"crowd_items", agg.crowd.size()},
                                       {"R1U", agg.count(Provenance::R1U)},
                                       {"round2_queue", agg.round2_queue.size()},
                                       {"R2U", agg.count(Provenance::R2U)},
                                       {"R2S", agg.count(Provenance::R2S)},
                                       {"dropped", agg.dropped.size()},
                                       {"pending", agg.pending.size()},
                                       {"R1S", agg.system.size()},
                                       {"R1S_unresolved", agg.r1s_unresolved.size()},
                                       {"crowd_percent_unanimous", crowd_percent_unanimous(agg)}};
  if (auto k = expert_agreement(agg)) {
    annotation_summary["expert_kappa"] = k->kappa;
    annotation_summary["expert_percent_agreement"] = k->percent_unanimous;
    annotation_summary["expert_items"] = k->items;
  }
  report.manifest = {{"config", to_json(cfg)},
                     {"config_hash", report.config_hash},
                     {"seed", cfg.seed},
                     {"corpus_messages", inputs.corpus.size()},
                     {"filter_matched", matched},
                     {"annotations", annotation_summary},
                     {"variants", variants_json}};
  write_file_atomic(cfg.output_dir / "manifest.json", report.manifest.dump(2) + "\n");
  return report;
}

}  // namespace crowdlabel
