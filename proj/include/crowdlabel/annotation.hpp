#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "io.hpp"

namespace crowdlabel {

/// A: suicidal thoughts, B: supportive/helpful, C: reaction to news/media, D: other.
enum class Label : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<Label, 4> kLabels{Label::A, Label::B, Label::C, Label::D};
inline constexpr std::size_t kNumLabels = kLabels.size();

inline char to_char(Label l) { return static_cast<char>('A' + static_cast<int>(l)); }
inline std::string to_string(Label l) { return std::string(1, to_char(l)); }
inline std::size_t index(Label l) { return static_cast<std::size_t>(l); }

inline Label parse_label(std::string_view s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'D') return static_cast<Label>(s[0] - 'A');
  throw InputError("invalid label '" + std::string(s) + "' (expected A, B, C or D)");
}

enum class Round { crowd, expert };

inline std::string_view to_string(Round r) { return r == Round::crowd ? "crowd" : "expert"; }

inline Round parse_round(std::string_view s) {
  if (s == "crowd") return Round::crowd;
  if (s == "expert") return Round::expert;
  throw InputError("invalid round '" + std::string(s) + "' (expected crowd or expert)");
}

struct Annotation {
  std::string item_id;
  std::string annotator_id;
  Label label = Label::D;
  Round round = Round::crowd;
  double trust = 1.0;
};

enum class BinaryClass : std::uint8_t { negative = 0, positive = 1 };

inline BinaryClass binarize(Label l) { return l == Label::A ? BinaryClass::positive : BinaryClass::negative; }

inline int sign(BinaryClass c) { return c == BinaryClass::positive ? 1 : -1; }

inline std::string_view to_string(BinaryClass c) {
  return c == BinaryClass::positive ? "positive" : "negative";
}

// ---------------------------------------------------------------------------
// Per-item label distributions and the three voting rules.
// ---------------------------------------------------------------------------

struct LabelDistribution {
  std::string item_id;
  std::array<int, kNumLabels> counts{};
  std::array<double, kNumLabels> weighted{};

  int total() const {
    int t = 0;
    for (int c : counts) t += c;
    return t;
  }
};

inline LabelDistribution distribution(std::span<const Annotation> annotations) {
  if (annotations.empty()) throw InputError("distribution of an empty annotation list");
  LabelDistribution d;
  d.item_id = annotations.front().item_id;
  for (const auto& a : annotations) {
    if (a.item_id != d.item_id) {
      throw InputError("mixed item ids in one distribution: '" + d.item_id + "' and '" + a.item_id + "'");
    }
    d.counts[index(a.label)] += 1;
    d.weighted[index(a.label)] += a.trust;
  }
  return d;
}

/// Trust-weighted plurality. nullopt means Unresolved (tie for the maximum).
inline std::optional<Label> majority_label(const LabelDistribution& d) {
  double best = -1.0;
  for (double w : d.weighted) best = std::max(best, w);
  if (best <= 0.0) return std::nullopt;
  const double eps = 1e-9 * best;
  std::optional<Label> winner;
  for (Label l : kLabels) {
    if (std::abs(d.weighted[index(l)] - best) <= eps) {
      if (winner) return std::nullopt;
      winner = l;
    }
  }
  return winner;
}

/// The label iff exactly one label received votes.
inline std::optional<Label> unanimous_label(const LabelDistribution& d) {
  std::optional<Label> only;
  for (Label l : kLabels) {
    if (d.counts[index(l)] > 0) {
      if (only) return std::nullopt;
      only = l;
    }
  }
  return only;
}

// ---------------------------------------------------------------------------
// Gold labels.
// ---------------------------------------------------------------------------

enum class Provenance { R1S, R1U, R2U, R2S };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::R1S: return "R1S";
    case Provenance::R1U: return "R1U";
    case Provenance::R2U: return "R2U";
    case Provenance::R2S: return "R2S";
  }
  return "R1S";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "R1S") return Provenance::R1S;
  if (s == "R1U") return Provenance::R1U;
  if (s == "R2U") return Provenance::R2U;
  if (s == "R2S") return Provenance::R2S;
  throw InputError("invalid provenance '" + std::string(s) + "'");
}

struct GoldLabel {
  std::string item_id;
  Label label = Label::D;
  Provenance provenance = Provenance::R1U;

  friend bool operator==(const GoldLabel&, const GoldLabel&) = default;
};

/// Second-round merge for an item the crowd did not label unanimously.
/// Agreeing experts win (R2U); otherwise the crowd majority is adopted (R2S);
/// with no crowd majority either, the item is dropped (nullopt).
inline std::optional<GoldLabel> merge_expert(const LabelDistribution& crowd, Label expert1, Label expert2) {
  if (unanimous_label(crowd)) {
    throw InputError("item '" + crowd.item_id + "' is crowd-unanimous and is not adjudicated");
  }
  if (expert1 == expert2) return GoldLabel{crowd.item_id, expert1, Provenance::R2U};
  if (auto majority = majority_label(crowd)) return GoldLabel{crowd.item_id, *majority, Provenance::R2S};
  return std::nullopt;
}

struct AuditRecord {
  std::string item_id;
  std::string reason;
};

/// Result of running both annotation rounds over a corpus.
struct Aggregation {
  std::map<std::string, LabelDistribution> crowd;                   // every crowd-annotated item
  std::map<std::string, std::map<std::string, Label>> expert;       // item -> expert -> label
  std::vector<std::string> experts;                                 // sorted, at most two
  std::vector<GoldLabel> system;                                    // R1S: crowd majority
  std::vector<GoldLabel> gold;                                      // R1U, R2U, R2S
  std::vector<std::string> round2_queue;                            // not crowd-unanimous
  std::vector<std::string> pending;                                 // queued, experts incomplete
  std::vector<AuditRecord> dropped;                                 // no resolvable gold label
  std::vector<AuditRecord> r1s_unresolved;                          // majority tie in round 1

  std::size_t count(Provenance p) const {
    return static_cast<std::size_t>(std::count_if(gold.begin(), gold.end(),
                                                  [p](const GoldLabel& g) { return g.provenance == p; }));
  }
};

inline Aggregation aggregate(std::span<const Annotation> annotations) {
  Aggregation agg;
  std::map<std::string, std::vector<Annotation>> crowd_by_item;
  std::set<std::string> expert_ids;
  for (const auto& a : annotations) {
    if (a.round == Round::crowd) {
      crowd_by_item[a.item_id].push_back(a);
    } else {
      auto& slot = agg.expert[a.item_id];
      if (!slot.emplace(a.annotator_id, a.label).second) {
        throw InputError("expert '" + a.annotator_id + "' labeled item '" + a.item_id + "' twice");
      }
      expert_ids.insert(a.annotator_id);
    }
  }
  if (expert_ids.size() > 2) throw InputError("more than two experts registered");
  agg.experts.assign(expert_ids.begin(), expert_ids.end());

  for (const auto& [item, labels] : agg.expert) {
    if (!crowd_by_item.count(item)) throw InputError("expert label for item '" + item + "' without crowd labels");
  }

  for (auto& [item, anns] : crowd_by_item) {
    auto dist = distribution(anns);
    if (auto majority = majority_label(dist)) {
      agg.system.push_back({item, *majority, Provenance::R1S});
    } else {
      agg.r1s_unresolved.push_back({item, "crowd majority tie"});
    }
    if (auto unanimous = unanimous_label(dist)) {
      if (agg.expert.count(item)) {
        throw InputError("expert label for crowd-unanimous item '" + item + "'");
      }
      agg.gold.push_back({item, *unanimous, Provenance::R1U});
    } else {
      agg.round2_queue.push_back(item);
      auto it = agg.expert.find(item);
      if (it == agg.expert.end() || it->second.size() < 2) {
        agg.pending.push_back(item);
      } else {
        auto e = it->second.begin();
        const Label first = e->second;
        const Label second = std::next(e)->second;
        if (auto g = merge_expert(dist, first, second)) {
          agg.gold.push_back(*g);
        } else {
          agg.dropped.push_back({item, "experts disagree and crowd majority is tied"});
        }
      }
    }
    agg.crowd.emplace(item, std::move(dist));
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Dataset variants (one per trained model).
// ---------------------------------------------------------------------------

enum class VariantName { R1S, R1U, R2U, R1U_R2U, R1U_R2U_R2S };

inline constexpr std::array<VariantName, 5> kVariants{VariantName::R1S, VariantName::R1U, VariantName::R2U,
                                                      VariantName::R1U_R2U, VariantName::R1U_R2U_R2S};

inline std::string_view to_string(VariantName v) {
  switch (v) {
    case VariantName::R1S: return "V_R1S";
    case VariantName::R1U: return "V_R1U";
    case VariantName::R2U: return "V_R2U";
    case VariantName::R1U_R2U: return "V_R1U_R2U";
    case VariantName::R1U_R2U_R2S: return "V_R1U_R2U_R2S";
  }
  return "V_R1S";
}

/// C1..C5, the model trained on the variant.
inline std::string model_name(VariantName v) {
  return "C" + std::to_string(static_cast<int>(v) + 1);
}

inline VariantName parse_variant(std::string_view s) {
  for (VariantName v : kVariants) {
    if (s == to_string(v) || s == to_string(v).substr(2) || s == model_name(v)) return v;
  }
  throw InputError("unknown variant '" + std::string(s) + "'");
}

struct DatasetVariant {
  VariantName name = VariantName::R1S;
  std::vector<GoldLabel> items;  // sorted by item_id
};

inline DatasetVariant build_variant(VariantName name, const Aggregation& agg) {
  DatasetVariant v{name, {}};
  auto take = [&](std::initializer_list<Provenance> wanted) {
    for (const auto& g : agg.gold) {
      if (std::find(wanted.begin(), wanted.end(), g.provenance) != wanted.end()) v.items.push_back(g);
    }
  };
  switch (name) {
    case VariantName::R1S: v.items = agg.system; break;
    case VariantName::R1U: take({Provenance::R1U}); break;
    case VariantName::R2U: take({Provenance::R2U}); break;
    case VariantName::R1U_R2U: take({Provenance::R1U, Provenance::R2U}); break;
    case VariantName::R1U_R2U_R2S: take({Provenance::R1U, Provenance::R2U, Provenance::R2S}); break;
  }
  std::sort(v.items.begin(), v.items.end(),
            [](const GoldLabel& a, const GoldLabel& b) { return a.item_id < b.item_id; });
  return v;
}

// ---------------------------------------------------------------------------
// Agreement.
// ---------------------------------------------------------------------------

struct AgreementReport {
  double kappa = 0.0;
  double percent_unanimous = 0.0;  // items on which both raters agree
  std::size_t items = 0;
  std::array<std::array<std::int64_t, kNumLabels>, kNumLabels> contingency{};  // [rater1][rater2]
};

/// Cohen's kappa from integer counts: (n*agree - sum r_l c_l) / (n^2 - sum r_l c_l).
/// With chance agreement 1 (both raters constant on one label) kappa is 1.
inline AgreementReport cohen_kappa(const std::map<std::string, Label>& rater1,
                                   const std::map<std::string, Label>& rater2) {
  if (rater1.empty()) throw InputError("kappa over an empty item set");
  if (rater1.size() != rater2.size()) throw InputError("raters labeled different item sets");
  AgreementReport r;
  std::int64_t agree = 0;
  auto it2 = rater2.begin();
  for (const auto& [item, l1] : rater1) {
    if (it2->first != item) throw InputError("raters labeled different item sets ('" + item + "')");
    r.contingency[index(l1)][index(it2->second)] += 1;
    if (l1 == it2->second) ++agree;
    ++it2;
  }
  const auto n = static_cast<std::int64_t>(rater1.size());
  std::int64_t chance = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    std::int64_t row = 0, col = 0;
    for (std::size_t m = 0; m < kNumLabels; ++m) {
      row += r.contingency[l][m];
      col += r.contingency[m][l];
    }
    chance += row * col;
  }
  r.items = static_cast<std::size_t>(n);
  r.percent_unanimous = 100.0 * static_cast<double>(agree) / static_cast<double>(n);
  const std::int64_t denom = n * n - chance;
  if (denom == 0) {
    r.kappa = agree == n ? 1.0 : 0.0;
  } else {
    r.kappa = static_cast<double>(n * agree - chance) / static_cast<double>(denom);
  }
  return r;
}

/// Agreement between the two experts over items both of them labeled.
inline std::optional<AgreementReport> expert_agreement(const Aggregation& agg) {
  if (agg.experts.size() != 2) return std::nullopt;
  std::map<std::string, Label> r1, r2;
  for (const auto& [item, labels] : agg.expert) {
    auto a = labels.find(agg.experts[0]);
    auto b = labels.find(agg.experts[1]);
    if (a != labels.end() && b != labels.end()) {
      r1.emplace(item, a->second);
      r2.emplace(item, b->second);
    }
  }
  if (r1.empty()) return std::nullopt;
  return cohen_kappa(r1, r2);
}

inline double crowd_percent_unanimous(const Aggregation& agg) {
  if (agg.crowd.empty()) return 0.0;
  return 100.0 * static_cast<double>(agg.count(Provenance::R1U)) / static_cast<double>(agg.crowd.size());
}

// ---------------------------------------------------------------------------
// Files.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Annotation& a) {
  return {{"item_id", a.item_id},
          {"annotator_id", a.annotator_id},
          {"label", to_string(a.label)},
          {"round", std::string(to_string(a.round))},
          {"trust", a.trust}};
}

inline Annotation annotation_from_json(const nlohmann::json& j) {
  Annotation a;
  a.item_id = j.at("item_id").get<std::string>();
  a.annotator_id = j.at("annotator_id").get<std::string>();
  a.label = parse_label(j.at("label").get<std::string>());
  a.round = parse_round(j.at("round").get<std::string>());
  a.trust = j.value("trust", 1.0);
  if (a.item_id.empty() || a.annotator_id.empty()) throw InputError("empty item_id or annotator_id");
  if (!(a.trust > 0.0 && a.trust <= 1.0)) throw InputError("trust must lie in (0, 1]");
  if (a.round == Round::expert && a.trust != 1.0) throw InputError("expert annotations carry trust 1.0");
  return a;
}

inline std::vector<Annotation> parse_annotations(std::istream& in, const std::string& source_name = "<annotations>") {
  std::vector<Annotation> out;
  std::set<std::tuple<std::string, std::string, Round>> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto a = annotation_from_json(nlohmann::json::parse(line));
      if (!seen.emplace(a.item_id, a.annotator_id, a.round).second) {
        throw InputError("duplicate annotation by '" + a.annotator_id + "' for item '" + a.item_id + "'");
      }
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source_name, lineno, e.what());
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
  }
  return out;
}

inline std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotations " + path.string());
  return parse_annotations(in, path.string());
}

inline void write_gold_csv(std::ostream& out, std::span<const GoldLabel> gold) {
  out << "item_id,label,provenance\n";
  for (const auto& g : gold) {
    out << csv_field(g.item_id) << ',' << to_char(g.label) << ',' << to_string(g.provenance) << '\n';
  }
}

}  // namespace crowdlabel
