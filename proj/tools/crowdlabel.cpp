// crowdlabel: command-line front end for the labeling and modeling pipeline.
//
// Exit codes: 0 success, 1 input error, 2 internal error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "crowdlabel/adjudication.hpp"
#include "crowdlabel/annotation.hpp"
#include "crowdlabel/corpus.hpp"
#include "crowdlabel/experiment.hpp"
#include "crowdlabel/report.hpp"
#include "crowdlabel/server.hpp"
#include "crowdlabel/synth.hpp"

#ifndef CROWDLABEL_DATA_DIR
#define CROWDLABEL_DATA_DIR "data"
#endif

namespace cl = crowdlabel;

namespace {

const std::string kDataDir = CROWDLABEL_DATA_DIR;

// Experiment flags. Each one, when given, overrides the config file.
struct ExperimentFlags {
  std::string config;
  std::map<std::string, std::string> overrides;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    auto opt = [&](const char* flag, const char* key, const char* help) {
      app->add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; }, help);
    };
    opt("--corpus", "corpus", "corpus JSONL (id, text, source)");
    opt("--annotations", "annotations", "annotations JSONL");
    opt("--rules", "rules", "filter ruleset (default: bundled)");
    opt("--lexicon", "lexicon", "lemma lexicon TSV (default: bundled)");
    opt("--vocab-size", "vocab_size", "maximum vocabulary size");
    opt("--k", "k", "cross-validation folds");
    opt("--seed", "seed", "master seed");
    opt("--reg-c", "reg_c", "SVM regularization constant C");
    opt("--grid", "grid", "class-weight grid, e.g. 1:1,2:1,4:1");
    opt("--variants", "variants", "comma-separated variants (V_R1S ... or C1..C5)");
    opt("--out", "output_dir", "output directory");
    opt("--jobs", "jobs", "worker threads (0 = all cores)");
  }

  cl::ExperimentConfig resolve() const {
    cl::ExperimentConfig cfg;
    cfg.ruleset_path = kDataDir + "/rules/c0.rules";
    cfg.lexicon_path = kDataDir + "/lexicon/lemmas.tsv";
    if (!config.empty()) cfg = cl::load_config(config, cfg);
    for (const auto& [k, v] : overrides) cl::apply_setting(cfg, k, v);
    return cfg;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    cl::write_file_atomic(path, text);
  }
}

std::vector<cl::Document> documents_for(const cl::ExperimentInputs& in, const cl::Aggregation& agg,
                                        cl::VariantName name) {
  const auto variant = cl::build_variant(name, agg);
  std::set<std::string> wanted;
  for (const auto& g : variant.items) wanted.insert(g.item_id);
  return cl::variant_documents(variant, cl::corpus_ngrams(in.corpus, in.lemmatizer, wanted));
}

int cmd_filter(const std::string& corpus, const std::string& rules, std::optional<std::size_t> sample,
               std::uint64_t seed, const std::string& out) {
  const auto msgs = cl::load_corpus(corpus);
  const auto rs = cl::load_ruleset(rules);
  std::vector<cl::Message> matched;
  if (sample) {
    matched = cl::sample_matched(msgs, rs, *sample, seed);
  } else {
    for (const auto& m : msgs) {
      if (cl::filter_match(rs, m).matched) matched.push_back(m);
    }
  }
  std::ostringstream s;
  cl::write_corpus(s, matched, true);
  write_text(out, s.str());
  std::cerr << "matched " << matched.size() << " of " << msgs.size() << " messages\n";
  return 0;
}

int cmd_aggregate(const std::string& annotations, const std::string& out_dir) {
  const auto anns = cl::load_annotations(annotations);
  const auto agg = cl::aggregate(anns);
  std::cout << "crowd items      " << agg.crowd.size() << "\n"
            << "R1U (unanimous)  " << agg.count(cl::Provenance::R1U) << "\n"
            << "round-2 queue    " << agg.round2_queue.size() << "\n"
            << "R2U              " << agg.count(cl::Provenance::R2U) << "\n"
            << "R2S              " << agg.count(cl::Provenance::R2S) << "\n"
            << "dropped          " << agg.dropped.size() << "\n"
            << "pending          " << agg.pending.size() << "\n"
            << "R1S              " << agg.system.size() << " (" << agg.r1s_unresolved.size() << " ties)\n";
  if (auto k = cl::expert_agreement(agg)) {
    std::cout << "expert kappa     " << cl::fmt_real(k->kappa, 4) << " over " << k->items << " items\n";
  }
  if (!out_dir.empty()) {
    cl::fs::create_directories(out_dir);
    for (auto v : cl::kVariants) {
      const auto variant = cl::build_variant(v, agg);
      std::ostringstream s;
      cl::write_gold_csv(s, variant.items);
      cl::write_file_atomic(cl::fs::path(out_dir) / (std::string(cl::to_string(v)) + ".csv"), s.str());
    }
  }
  return 0;
}

int cmd_train(const ExperimentFlags& flags, const std::string& variant_name) {
  auto cfg = flags.resolve();
  const auto name = cl::parse_variant(variant_name);
  const auto in = cl::load_inputs(cfg);
  const auto agg = cl::aggregate(in.annotations);
  const auto variant = cl::build_variant(name, agg);
  const auto docs = documents_for(in, agg, name);
  const auto r = cl::run_variant(variant, docs, cfg);
  if (r.skipped) throw cl::InputError(std::string(cl::to_string(name)) + " skipped: " + r.skip_reason);

  std::vector<const cl::Document*> all;
  for (const auto& d : docs) all.push_back(&d);
  cl::PipelineConfig pc;
  pc.vocab_size = cfg.vocab_size;
  pc.train = r.grid.best;
  const auto fit = cl::fit_split(all, {}, pc);

  const cl::fs::path dir = cfg.output_dir;
  cl::fs::create_directories(dir);
  cl::save_model(dir / "model.json", fit.model);
  cl::write_file_atomic(dir / "vocabulary.csv", cl::render([&](std::ostream& o) { cl::write_vocabulary_csv(o, fit.vocab); }));
  cl::write_file_atomic(dir / "metrics.csv", cl::render([&](std::ostream& o) { cl::write_metrics_csv(o, r); }));
  cl::write_file_atomic(dir / "top_features.csv", cl::render([&](std::ostream& o) { cl::write_top_features_csv(o, r); }));
  auto auc = r.cv.summary.at("roc_auc");
  std::cout << cl::model_name(name) << " (" << cl::to_string(name) << "): " << r.items << " items, weights "
            << cl::fmt_real(r.grid.best.class_weight_pos, 2) << ":" << cl::fmt_real(r.grid.best.class_weight_neg, 2)
            << ", CV roc_auc " << cl::fmt_real(auc.mean, 4) << " +/- " << cl::fmt_real(auc.std, 4) << "\n";
  return 0;
}

int cmd_curve(const ExperimentFlags& flags, const std::string& variant_name, const std::string& weights) {
  auto cfg = flags.resolve();
  const auto name = cl::parse_variant(variant_name);
  const auto in = cl::load_inputs(cfg);
  const auto agg = cl::aggregate(in.annotations);
  const auto docs = documents_for(in, agg, name);
  std::vector<std::pair<std::string, cl::BinaryClass>> items;
  for (const auto& d : docs) items.emplace_back(d.id, d.label);
  const auto plan = cl::stratified_kfold(items, cfg.k, cfg.seed);
  cl::PipelineConfig pc;
  pc.vocab_size = cfg.vocab_size;
  pc.train.reg_c = cfg.reg_c;
  pc.train.seed = cfg.seed;
  if (!weights.empty()) {
    const auto w = cl::parse_grid(weights);
    if (w.size() != 1) throw cl::InputError("--weights takes a single pos:neg pair");
    pc.train.class_weight_pos = w[0].pos;
    pc.train.class_weight_neg = w[0].neg;
  }
  const auto fractions = cl::default_fractions();
  cl::VariantResult r;
  r.name = name;
  r.curve = cl::learning_curve(docs, plan, fractions, pc, cfg.seed, cfg.effective_jobs());
  for (const auto& w : r.curve.warnings) std::cerr << "warning: " << w << "\n";
  cl::fs::create_directories(cfg.output_dir);
  cl::write_file_atomic(cfg.output_dir / "learning_curve.csv",
                        cl::render([&](std::ostream& o) { cl::write_learning_curve_csv(o, r); }));
  return 0;
}

int cmd_report(const std::string& run_dir, std::string out_dir) {
  if (out_dir.empty()) out_dir = (cl::fs::path(run_dir) / "report").string();
  cl::fs::create_directories(out_dir);
  std::size_t written = 0;
  for (auto v : cl::kVariants) {
    const auto csv = cl::fs::path(run_dir) / std::string(cl::to_string(v)) / "learning_curve.csv";
    if (!cl::fs::exists(csv)) continue;
    std::ifstream in(csv);
    const auto rows = cl::parse_learning_curve_csv(in, csv.string());
    const auto title = "Learning curve, " + cl::model_name(v) + " (" + std::string(cl::to_string(v)) + ")";
    cl::write_file_atomic(cl::fs::path(out_dir) / (std::string(cl::to_string(v)) + "_learning_curve.svg"),
                          cl::render_learning_curve_svg(rows, title));
    ++written;
  }
  if (written == 0) throw cl::InputError("no learning_curve.csv found under " + run_dir);
  std::cout << "wrote " << written << " SVG file(s) to " << out_dir << "\n";
  return 0;
}

int cmd_serve(const std::string& corpus, const std::string& annotations, const std::string& experts,
              const std::string& state_dir, const cl::ServeOptions& serve, bool show_crowd, std::size_t snapshot_every) {
  // Signals are taken synchronously by a dedicated thread.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const auto msgs = cl::load_corpus(corpus);
  const auto anns = cl::load_annotations(annotations);
  cl::check_references(msgs, anns);
  cl::AdjudicationOptions opts;
  opts.experts = cl::experiment_detail::split(experts, ',');
  opts.show_crowd = show_crowd;
  opts.state_dir = state_dir.empty() ? cl::fs::path(annotations + ".state") : cl::fs::path(state_dir);
  opts.snapshot_every = snapshot_every;
  cl::AdjudicationService service(msgs, anns, opts);

  httplib::Server svr;
  cl::install_routes(svr, service, serve);
  const int port = cl::bind_server(svr, serve);
  std::cout << "listening on http://" << serve.host << ":" << port << std::endl;

  std::thread([&svr, set] {
    int sig = 0;
    sigwait(&set, &sig);
    svr.stop();
  }).detach();
  svr.listen_after_bind();

  service.write_snapshot();
  const auto added = service.persist_annotations(annotations);
  std::cout << "stopped; " << added << " new expert annotation(s) written to " << annotations << std::endl;
  return 0;
}

int cmd_run_all(const ExperimentFlags& flags) {
  const auto cfg = flags.resolve();
  const auto report = cl::run_experiment(cfg);
  std::size_t trained = 0;
  for (const auto& r : report.variants) {
    if (r.skipped) {
      std::cerr << "skipped " << cl::to_string(r.name) << ": " << r.skip_reason << "\n";
      continue;
    }
    ++trained;
    const auto& auc = r.cv.summary.at("roc_auc");
    std::cout << cl::model_name(r.name) << " " << cl::to_string(r.name) << " items=" << r.items
              << " roc_auc=" << cl::fmt_real(auc.mean, 4) << "\n";
  }
  std::cout << "config hash " << report.config_hash << "; " << trained << " variant(s) written to "
            << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_synth(const std::string& out_dir, std::size_t items, std::uint64_t seed) {
  cl::SynthConfig sc;
  sc.items = items;
  sc.seed = seed;
  const auto study = cl::generate_study(sc);
  cl::fs::create_directories(out_dir);
  std::ostringstream corpus, anns;
  cl::write_corpus(corpus, study.messages);
  for (const auto& a : study.annotations) anns << cl::to_json(a).dump() << '\n';
  cl::write_file_atomic(cl::fs::path(out_dir) / "corpus.jsonl", corpus.str());
  cl::write_file_atomic(cl::fs::path(out_dir) / "annotations.jsonl", anns.str());
  std::cout << "wrote " << study.messages.size() << " messages and " << study.annotations.size() << " annotations to "
            << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdlabel: crowd labels, expert adjudication and linear SVM text classifiers"};
  app.require_subcommand(1);

  std::string corpus, annotations, rules = kDataDir + "/rules/c0.rules", out;
  std::optional<std::size_t> sample;
  std::uint64_t seed = 1;
  auto* filter = app.add_subcommand("filter", "apply the rule filter to a corpus");
  filter->add_option("--corpus", corpus, "corpus JSONL")->required();
  filter->add_option("--rules", rules, "ruleset file");
  filter->add_option("--sample", sample, "draw this many matched messages");
  filter->add_option("--seed", seed, "sampling seed");
  filter->add_option("--out", out, "output JSONL (default stdout)");

  auto* aggregate = app.add_subcommand("aggregate", "build gold labels and agreement statistics");
  aggregate->add_option("--annotations", annotations, "annotations JSONL")->required();
  aggregate->add_option("--out", out, "directory for per-variant gold CSVs");

  ExperimentFlags train_flags, curve_flags, run_flags;
  std::string variant = "V_R1U_R2U", weights;
  auto* train = app.add_subcommand("train", "grid search, cross-validate and fit one variant");
  train_flags.add_to(train);
  train->add_option("--variant", variant, "dataset variant");

  auto* curve = app.add_subcommand("curve", "learning curve for one variant");
  curve_flags.add_to(curve);
  curve->add_option("--variant", variant, "dataset variant");
  curve->add_option("--weights", weights, "class weights pos:neg (default 1:1)");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "render learning-curve SVGs from a run directory");
  report->add_option("--run-dir", run_dir, "output directory of run-all")->required();
  report->add_option("--out", out, "SVG directory (default <run-dir>/report)");

  std::string experts = "expert1,expert2", state_dir;
  cl::ServeOptions serve_opts;
  bool show_crowd = false;
  std::size_t snapshot_every = 100;
  auto* serve = app.add_subcommand("serve", "run the expert adjudication service");
  serve->add_option("--corpus", corpus, "corpus JSONL")->required();
  serve->add_option("--annotations", annotations, "annotations JSONL (expert labels are appended on shutdown)")
      ->required();
  serve->add_option("--experts", experts, "the two expert ids, comma-separated");
  serve->add_option("--state-dir", state_dir, "event log directory (default <annotations>.state)");
  serve->add_option("--host", serve_opts.host, "bind address");
  serve->add_option("--port", serve_opts.port, "port (0 picks a free one)");
  serve->add_option("--ui-dir", serve_opts.ui_dir, "static UI bundle served at /");
  serve->add_flag("--show-crowd", show_crowd, "include crowd vote counts in queue items");
  serve->add_option("--snapshot-every", snapshot_every, "events between snapshots");

  auto* run_all = app.add_subcommand("run-all", "full experiment: every variant, all reports");
  run_flags.add_to(run_all);

  std::size_t synth_items = 2000;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and annotation study");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--items", synth_items, "number of messages");
  synth->add_option("--seed", seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*filter) return cmd_filter(corpus, rules, sample, seed, out);
    if (*aggregate) return cmd_aggregate(annotations, out);
    if (*train) return cmd_train(train_flags, variant);
    if (*curve) return cmd_curve(curve_flags, variant, weights);
    if (*report) return cmd_report(run_dir, out);
    if (*serve) return cmd_serve(corpus, annotations, experts, state_dir, serve_opts, show_crowd, snapshot_every);
    if (*run_all) return cmd_run_all(run_flags);
    if (*synth) return cmd_synth(out, synth_items, seed);
  } catch (const cl::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
