#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"

namespace crowdlabel {

/// Submission conflicts with a recorded label (HTTP 409).
class ConflictError : public InputError {
 public:
  using InputError::InputError;
};

/// Unknown queue item (HTTP 404).
class NotFoundError : public InputError {
 public:
  using InputError::InputError;
};

/// Expert id not registered with the service (HTTP 403).
class UnknownExpertError : public InputError {
 public:
  using InputError::InputError;
};

enum class ItemStatus { pending, half_labeled, resolved, dropped };

inline std::string_view to_string(ItemStatus s) {
  switch (s) {
    case ItemStatus::pending: return "pending";
    case ItemStatus::half_labeled: return "half_labeled";
    case ItemStatus::resolved: return "resolved";
    case ItemStatus::dropped: return "dropped";
  }
  return "pending";
}

struct QueueItem {
  std::string item_id;
  std::string anon_text;
  LabelDistribution crowd;
  ItemStatus status = ItemStatus::pending;
  std::map<std::string, Label> labels;  // expert -> label; never exposed before resolution
  std::optional<GoldLabel> gold;
};

enum class SubmitKind { recorded, resolved, conflict_resolved, dropped };

inline std::string_view to_string(SubmitKind k) {
  switch (k) {
    case SubmitKind::recorded: return "recorded";
    case SubmitKind::resolved: return "resolved";
    case SubmitKind::conflict_resolved: return "conflict_resolved";
    case SubmitKind::dropped: return "dropped";
  }
  return "recorded";
}

struct SubmitOutcome {
  SubmitKind kind = SubmitKind::recorded;
  std::optional<GoldLabel> gold;
  bool duplicate = false;  // identical resubmission, nothing changed
};

struct AdjudicationStats {
  std::optional<AgreementReport> agreement;  // over doubly-labeled items
  std::size_t doubly_labeled = 0;
  std::size_t pending = 0, half_labeled = 0, resolved = 0, dropped = 0, total = 0;
  std::array<std::size_t, kNumLabels> gold_distribution{};  // resolved items only
  std::size_t r2u = 0, r2s = 0;

  /// Kappa, or nullopt with fewer than two items or constant raters.
  std::optional<double> kappa() const {
    if (!agreement || doubly_labeled < 2) return std::nullopt;
    std::int64_t chance = 0;
    const auto& t = agreement->contingency;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      std::int64_t row = 0, col = 0;
      for (std::size_t m = 0; m < kNumLabels; ++m) row += t[l][m], col += t[m][l];
      chance += row * col;
    }
    const auto n = static_cast<std::int64_t>(doubly_labeled);
    if (chance == n * n) return std::nullopt;
    return agreement->kappa;
  }
};

struct AdjudicationOptions {
  std::vector<std::string> experts{"expert1", "expert2"};
  bool show_crowd = false;
  std::filesystem::path state_dir;  // empty: no persistence
  std::size_t snapshot_every = 100;
};

/// Round-two adjudication: the queue of items without a unanimous crowd
/// label, two experts labeling independently, and the merge into gold labels.
///
/// Every accepted label is appended to `events.jsonl` in the state directory
/// and flushed before the call returns; `snapshot.json` is rewritten every
/// `snapshot_every` events. Construction replays snapshot plus log.
class AdjudicationService {
 public:
  AdjudicationService(std::span<const Message> corpus, std::span<const Annotation> annotations,
                      AdjudicationOptions options)
      : options_(std::move(options)) {
    if (options_.experts.size() != 2 || options_.experts[0] == options_.experts[1]) {
      throw InputError("adjudication needs exactly two distinct experts");
    }
    std::map<std::string, const Message*> texts;
    for (const auto& m : corpus) texts.emplace(m.id, &m);

    std::map<std::string, std::vector<Annotation>> crowd;
    for (const auto& a : annotations) {
      if (a.round == Round::crowd) crowd[a.item_id].push_back(a);
    }
    for (auto& [id, anns] : crowd) {
      auto dist = distribution(anns);
      if (auto u = unanimous_label(dist)) {
        unanimous_.push_back({id, *u, Provenance::R1U});
        continue;
      }
      auto it = texts.find(id);
      if (it == texts.end()) throw InputError("annotated item '" + id + "' is not in the corpus");
      QueueItem q;
      q.item_id = id;
      q.anon_text = it->second->anon_text;
      q.crowd = std::move(dist);
      queue_.emplace(id, std::move(q));
    }
    for (const auto& a : annotations) {
      if (a.round != Round::expert) continue;
      apply(a.annotator_id, a.item_id, a.label);
      preloaded_.emplace(a.item_id, a.annotator_id);
    }
    if (!options_.state_dir.empty()) recover();
  }

  AdjudicationService(const AdjudicationService&) = delete;
  AdjudicationService& operator=(const AdjudicationService&) = delete;

  const AdjudicationOptions& options() const { return options_; }

  /// Lowest-id open item this expert has not labeled; nullopt when done.
  std::optional<QueueItem> next_item(const std::string& expert) const {
    std::shared_lock lock(mutex_);
    check_expert(expert);
    for (const auto& [id, q] : queue_) {
      if ((q.status == ItemStatus::pending || q.status == ItemStatus::half_labeled) && !q.labels.count(expert)) {
        return q;
      }
    }
    return std::nullopt;
  }

  SubmitOutcome submit_label(const std::string& expert, const std::string& item_id, Label label) {
    std::unique_lock lock(mutex_);
    check_expert(expert);
    auto outcome = apply(expert, item_id, label);
    if (!outcome.duplicate) log_event(expert, item_id, label);
    return outcome;
  }

  AdjudicationStats stats() const {
    std::shared_lock lock(mutex_);
    AdjudicationStats s;
    std::map<std::string, Label> r1, r2;
    for (const auto& [id, q] : queue_) {
      ++s.total;
      switch (q.status) {
        case ItemStatus::pending: ++s.pending; break;
        case ItemStatus::half_labeled: ++s.half_labeled; break;
        case ItemStatus::resolved: ++s.resolved; break;
        case ItemStatus::dropped: ++s.dropped; break;
      }
      if (q.gold) {
        ++s.gold_distribution[index(q.gold->label)];
        (q.gold->provenance == Provenance::R2U ? s.r2u : s.r2s) += 1;
      }
      auto a = q.labels.find(options_.experts[0]);
      auto b = q.labels.find(options_.experts[1]);
      if (a != q.labels.end() && b != q.labels.end()) {
        r1.emplace(id, a->second);
        r2.emplace(id, b->second);
      }
    }
    s.doubly_labeled = r1.size();
    if (!r1.empty()) s.agreement = cohen_kappa(r1, r2);
    return s;
  }

  /// Crowd-unanimous items plus every resolved queue item, sorted by id.
  std::vector<GoldLabel> gold_labels() const {
    std::shared_lock lock(mutex_);
    std::vector<GoldLabel> out = unanimous_;
    for (const auto& [id, q] : queue_) {
      if (q.gold) out.push_back(*q.gold);
    }
    std::sort(out.begin(), out.end(), [](const GoldLabel& a, const GoldLabel& b) { return a.item_id < b.item_id; });
    return out;
  }

  std::optional<QueueItem> item(const std::string& item_id) const {
    std::shared_lock lock(mutex_);
    auto it = queue_.find(item_id);
    if (it == queue_.end()) return std::nullopt;
    return it->second;
  }

  /// Canonical dump of the labeling state, for replay comparisons.
  nlohmann::json state_json() const {
    std::shared_lock lock(mutex_);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [id, q] : queue_) {
      nlohmann::json labels = nlohmann::json::object();
      for (const auto& [e, l] : q.labels) labels[e] = to_string(l);
      nlohmann::json j = {{"item_id", id}, {"status", std::string(to_string(q.status))}, {"labels", labels}};
      if (q.gold) {
        j["gold"] = {{"label", to_string(q.gold->label)}, {"provenance", std::string(to_string(q.gold->provenance))}};
      }
      items.push_back(std::move(j));
    }
    return items;
  }

  /// Expert labels not yet present in the annotation file at `path` are
  /// appended (atomically). The file is left untouched when nothing is new.
  std::size_t persist_annotations(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::string contents = std::filesystem::exists(path) ? read_file(path) : std::string();
    std::set<std::pair<std::string, std::string>> present;
    {
      std::istringstream in(contents);
      for (const auto& a : parse_annotations(in, path.string())) {
        if (a.round == Round::expert) present.emplace(a.item_id, a.annotator_id);
      }
    }
    std::string extra;
    std::size_t added = 0;
    for (const auto& [id, q] : queue_) {
      for (const auto& [expert, label] : q.labels) {
        if (present.count({id, expert})) continue;
        extra += to_json(Annotation{id, expert, label, Round::expert, 1.0}).dump() + "\n";
        ++added;
      }
    }
    if (added == 0) return 0;
    if (!contents.empty() && contents.back() != '\n') contents += '\n';
    write_file_atomic(path, contents + extra);
    return added;
  }

  void write_snapshot() {
    std::unique_lock lock(mutex_);
    write_snapshot_locked();
  }

  std::filesystem::path events_path() const { return options_.state_dir / "events.jsonl"; }
  std::filesystem::path snapshot_path() const { return options_.state_dir / "snapshot.json"; }

 private:
  void check_expert(const std::string& expert) const {
    if (std::find(options_.experts.begin(), options_.experts.end(), expert) == options_.experts.end()) {
      throw UnknownExpertError("unknown expert '" + expert + "'");
    }
  }

  static SubmitOutcome outcome_of(const QueueItem& q, bool duplicate) {
    SubmitOutcome o;
    o.duplicate = duplicate;
    o.gold = q.gold;
    switch (q.status) {
      case ItemStatus::pending:
      case ItemStatus::half_labeled: o.kind = SubmitKind::recorded; break;
      case ItemStatus::dropped: o.kind = SubmitKind::dropped; break;
      case ItemStatus::resolved:
        o.kind = q.gold->provenance == Provenance::R2U ? SubmitKind::resolved : SubmitKind::conflict_resolved;
        break;
    }
    return o;
  }

  // Caller holds the write lock (or is the constructor).
  SubmitOutcome apply(const std::string& expert, const std::string& item_id, Label label) {
    check_expert(expert);
    auto it = queue_.find(item_id);
    if (it == queue_.end()) {
      auto u = std::find_if(unanimous_.begin(), unanimous_.end(),
                            [&](const GoldLabel& g) { return g.item_id == item_id; });
      if (u != unanimous_.end()) throw ConflictError("item '" + item_id + "' is crowd-unanimous, not in the queue");
      throw NotFoundError("item '" + item_id + "' is not in the adjudication queue");
    }
    QueueItem& q = it->second;
    if (auto prev = q.labels.find(expert); prev != q.labels.end()) {
      if (prev->second == label) return outcome_of(q, true);
      throw ConflictError("expert '" + expert + "' already labeled '" + item_id + "' as " + to_string(prev->second));
    }
    if (q.status == ItemStatus::resolved || q.status == ItemStatus::dropped) {
      throw ConflictError("item '" + item_id + "' is already " + std::string(to_string(q.status)));
    }
    q.labels.emplace(expert, label);
    if (q.labels.size() < 2) {
      q.status = ItemStatus::half_labeled;
    } else {
      auto gold = merge_expert(q.crowd, q.labels.at(options_.experts[0]), q.labels.at(options_.experts[1]));
      q.gold = gold;
      q.status = gold ? ItemStatus::resolved : ItemStatus::dropped;
    }
    return outcome_of(q, false);
  }

  void log_event(const std::string& expert, const std::string& item_id, Label label) {
    ++seq_;
    if (options_.state_dir.empty()) return;
    nlohmann::json j = {{"seq", seq_}, {"expert", expert}, {"item_id", item_id}, {"label", to_string(label)}};
    std::ofstream out(events_path(), std::ios::app | std::ios::binary);
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot append to " + events_path().string());
    if (options_.snapshot_every > 0 && seq_ % options_.snapshot_every == 0) write_snapshot_locked();
  }

  void write_snapshot_locked() {
    if (options_.state_dir.empty()) return;
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& [id, q] : queue_) {
      for (const auto& [e, l] : q.labels) {
        if (preloaded_.count({id, e})) continue;
        labels.push_back({{"item_id", id}, {"expert", e}, {"label", to_string(l)}});
      }
    }
    write_file_atomic(snapshot_path(), nlohmann::json{{"seq", seq_}, {"labels", labels}}.dump() + "\n");
  }

  void recover() {
    std::error_code ec;
    std::filesystem::create_directories(options_.state_dir, ec);
    {
      std::ofstream probe(events_path(), std::ios::app);
      if (!probe) throw InputError("state directory is not writable: " + options_.state_dir.string());
    }
    std::uint64_t snap_seq = 0;
    if (std::filesystem::exists(snapshot_path())) {
      try {
        auto j = nlohmann::json::parse(read_file(snapshot_path()));
        snap_seq = j.at("seq").get<std::uint64_t>();
        for (const auto& l : j.at("labels")) {
          apply(l.at("expert").get<std::string>(), l.at("item_id").get<std::string>(),
                parse_label(l.at("label").get<std::string>()));
        }
      } catch (const nlohmann::json::exception& e) {
        throw InputError(snapshot_path().string() + ": " + e.what());
      }
    }
    seq_ = snap_seq;
    const std::string log = read_file(events_path());
    std::vector<std::string> lines;
    {
      std::istringstream in(log);
      for (std::string line; std::getline(in, line);) lines.push_back(line);
    }
    std::string intact;  // the log minus a torn tail
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception&) {
        const bool last = std::all_of(lines.begin() + static_cast<std::ptrdiff_t>(i) + 1, lines.end(),
                                      [](const std::string& l) { return l.empty(); });
        if (last) break;  // torn final write
        throw ParseError(events_path().string(), i + 1, "malformed event");
      }
      intact += lines[i] + "\n";
      const auto seq = j.at("seq").get<std::uint64_t>();
      seq_ = std::max(seq_, seq);
      if (seq <= snap_seq) continue;
      apply(j.at("expert").get<std::string>(), j.at("item_id").get<std::string>(),
            parse_label(j.at("label").get<std::string>()));
    }
    // New events are appended, so a torn or unterminated tail must go first.
    if (intact != log) write_file_atomic(events_path(), intact);
  }

  AdjudicationOptions options_;
  std::map<std::string, QueueItem> queue_;
  std::vector<GoldLabel> unanimous_;
  std::set<std::pair<std::string, std::string>> preloaded_;  // (item, expert) read from the annotation file
  std::uint64_t seq_ = 0;
  mutable std::shared_mutex mutex_;
};

// ---------------------------------------------------------------------------
// JSON views used by the HTTP layer.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const GoldLabel& g) {
  return {{"item_id", g.item_id}, {"label", to_string(g.label)}, {"provenance", std::string(to_string(g.provenance))}};
}

/// The other expert's label is never part of this view.
inline nlohmann::json queue_item_json(const QueueItem& q, bool show_crowd) {
  nlohmann::json j = {{"item_id", q.item_id}, {"anon_text", q.anon_text}, {"status", std::string(to_string(q.status))}};
  if (show_crowd) {
    nlohmann::json counts = nlohmann::json::object();
    for (Label l : kLabels) counts[to_string(l)] = q.crowd.counts[index(l)];
    j["crowd_distribution"] = counts;
  }
  return j;
}

inline nlohmann::json to_json(const SubmitOutcome& o) {
  nlohmann::json j = {{"outcome", std::string(to_string(o.kind))}, {"duplicate", o.duplicate}};
  if (o.gold) j["gold"] = to_json(*o.gold);
  return j;
}

inline nlohmann::json to_json(const AdjudicationStats& s) {
  nlohmann::json j;
  if (auto k = s.kappa()) j["kappa"] = *k;
  else j["kappa"] = nullptr;
  j["doubly_labeled"] = s.doubly_labeled;
  j["percent_agreement"] = s.agreement ? nlohmann::json(s.agreement->percent_unanimous) : nlohmann::json(nullptr);
  nlohmann::json contingency = nlohmann::json::object();
  if (s.agreement) {
    for (Label a : kLabels) {
      for (Label b : kLabels) {
        if (auto c = s.agreement->contingency[index(a)][index(b)]) contingency[to_string(a) + to_string(b)] = c;
      }
    }
  }
  j["contingency"] = contingency;
  j["progress"] = {{"pending", s.pending},
                   {"half_labeled", s.half_labeled},
                   {"resolved", s.resolved},
                   {"dropped", s.dropped},
                   {"total", s.total}};
  nlohmann::json dist = nlohmann::json::object();
  for (Label l : kLabels) dist[to_string(l)] = s.gold_distribution[index(l)];
  j["gold_distribution"] = dist;
  j["provenance"] = {{"R2U", s.r2u}, {"R2S", s.r2s}};
  return j;
}

}  // namespace crowdlabel
