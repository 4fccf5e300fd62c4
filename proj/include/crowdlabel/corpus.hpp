#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "random.hpp"

namespace crowdlabel {

enum class Source { source1, source2, synthetic };

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::source1: return "source1";
    case Source::source2: return "source2";
    case Source::synthetic: return "synthetic";
  }
  return "synthetic";
}

inline Source parse_source(std::string_view s) {
  if (s == "source1") return Source::source1;
  if (s == "source2") return Source::source2;
  if (s == "synthetic") return Source::synthetic;
  throw InputError("unknown source '" + std::string(s) + "'");
}

struct Message {
  std::string id;
  std::string raw_text;
  std::string anon_text;
  Source source = Source::synthetic;
};

namespace detail {

inline bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }
inline bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

inline constexpr std::string_view kHandleToken = "@SOMEONE";
inline constexpr std::string_view kLinkToken = "HTTP://LINK";

/// Replaces @handles with @SOMEONE and http://, https://, www. links (up to
/// the next whitespace) with HTTP://LINK. Every other byte is kept as is.
inline std::string anonymize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    const bool token_start = i == 0 || detail::is_space(static_cast<unsigned char>(raw[i - 1]));
    const bool word_boundary = i == 0 || !detail::is_word_char(static_cast<unsigned char>(raw[i - 1]));
    if (word_boundary && (detail::starts_with_ci(raw, i, "http://") || detail::starts_with_ci(raw, i, "https://") ||
                          detail::starts_with_ci(raw, i, "www."))) {
      std::size_t j = i;
      while (j < raw.size() && !detail::is_space(static_cast<unsigned char>(raw[j]))) ++j;
      out += kLinkToken;
      i = j;
      continue;
    }
    if (token_start && raw[i] == '@' && i + 1 < raw.size() &&
        detail::is_word_char(static_cast<unsigned char>(raw[i + 1]))) {
      std::size_t j = i + 1;
      while (j < raw.size() && detail::is_word_char(static_cast<unsigned char>(raw[j]))) ++j;
      out += kHandleToken;
      i = j;
      continue;
    }
    out += raw[i++];
  }
  return out;
}

inline Message make_message(std::string id, std::string raw_text, Source source = Source::synthetic) {
  Message m{std::move(id), std::move(raw_text), {}, source};
  m.anon_text = anonymize(m.raw_text);
  return m;
}

// ---------------------------------------------------------------------------
// Candidate filter rules.
//
// Template syntax, matched case-insensitively against whole tokens:
//   want/wanted/wanting to die      alternation of single words
//   took/taken (my/your) own life   parenthesised part is optional
//   these ... thoughts              "..." skips 0-3 tokens
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxGapTokens = 3;

struct RuleElement {
  enum class Kind { word, gap, optional };
  Kind kind = Kind::word;
  std::vector<std::string> alternatives;  // word
  std::vector<RuleElement> children;      // optional
};

struct RulePattern {
  std::string id;
  std::string template_text;
  std::vector<RuleElement> elements;
};

struct RuleSet {
  std::string name = "C0";
  std::vector<RulePattern> rules;
};

struct MatchResult {
  bool matched = false;
  std::vector<std::string> rule_ids;
};

namespace detail {

inline std::vector<std::string> split_template(std::string_view text) {
  std::string spaced;
  for (char c : text) {
    if (c == '(' || c == ')') {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spaced) {
    if (is_space(static_cast<unsigned char>(c))) {
      if (!cur.empty()) parts.push_back(std::move(cur)), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

inline std::vector<RuleElement> parse_elements(const std::vector<std::string>& parts, std::size_t& pos,
                                               int depth) {
  std::vector<RuleElement> seq;
  while (pos < parts.size()) {
    const std::string& p = parts[pos];
    if (p == ")") {
      if (depth == 0) throw InputError("unbalanced ')'");
      ++pos;
      if (seq.empty()) throw InputError("empty optional group '()'");
      return seq;
    }
    ++pos;
    if (p == "(") {
      RuleElement opt;
      opt.kind = RuleElement::Kind::optional;
      opt.children = parse_elements(parts, pos, depth + 1);
      seq.push_back(std::move(opt));
    } else if (p == "...") {
      seq.push_back(RuleElement{RuleElement::Kind::gap, {}, {}});
    } else {
      RuleElement word;
      std::size_t start = 0;
      while (true) {
        const std::size_t slash = p.find('/', start);
        std::string alt = p.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
        if (alt.empty()) throw InputError("empty alternative in '" + p + "'");
        if (alt.find("...") != std::string::npos) throw InputError("gap '...' inside word '" + p + "'");
        word.alternatives.push_back(std::move(alt));
        if (slash == std::string::npos) break;
        start = slash + 1;
      }
      seq.push_back(std::move(word));
    }
  }
  if (depth > 0) throw InputError("unbalanced '('");
  return seq;
}

inline bool has_word(const std::vector<RuleElement>& seq) {
  return std::any_of(seq.begin(), seq.end(), [](const RuleElement& e) {
    return e.kind == RuleElement::Kind::word;
  });
}

// Positions reachable after matching `seq` starting at each of `starts`.
inline std::set<std::size_t> advance(const std::vector<RuleElement>& seq, std::set<std::size_t> starts,
                                     std::span<const std::string> tokens) {
  for (const auto& el : seq) {
    std::set<std::size_t> next;
    for (std::size_t at : starts) {
      switch (el.kind) {
        case RuleElement::Kind::word:
          if (at < tokens.size() &&
              std::find(el.alternatives.begin(), el.alternatives.end(), tokens[at]) != el.alternatives.end()) {
            next.insert(at + 1);
          }
          break;
        case RuleElement::Kind::gap:
          for (std::size_t g = 0; g <= kMaxGapTokens && at + g <= tokens.size(); ++g) next.insert(at + g);
          break;
        case RuleElement::Kind::optional: {
          next.insert(at);
          auto inner = advance(el.children, {at}, tokens);
          next.insert(inner.begin(), inner.end());
          break;
        }
      }
    }
    if (next.empty()) return next;
    starts = std::move(next);
  }
  return starts;
}

}  // namespace detail

/// Compiles one template; throws InputError on malformed input.
inline RulePattern parse_rule(std::string_view template_text, std::string id = {}) {
  auto parts = detail::split_template(template_text);
  if (parts.empty()) throw InputError("empty rule template");
  std::size_t pos = 0;
  RulePattern rule;
  rule.elements = detail::parse_elements(parts, pos, 0);
  if (!detail::has_word(rule.elements)) throw InputError("rule has no required word");
  std::string normalized;
  for (const auto& p : parts) {
    if (!normalized.empty()) normalized += ' ';
    normalized += p;
  }
  rule.template_text = normalized;
  rule.id = id.empty() ? normalized : std::move(id);
  return rule;
}

inline RuleSet parse_ruleset(std::istream& in, const std::string& source_name = "<rules>",
                             std::string name = "C0") {
  RuleSet set;
  set.name = std::move(name);
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rule = parse_rule(line);
      if (!seen.insert(rule.id).second) throw InputError("duplicate rule '" + rule.id + "'");
      set.rules.push_back(std::move(rule));
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
  }
  if (set.rules.empty()) throw InputError(source_name + ": rule file contains no rules");
  return set;
}

inline RuleSet load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rule file " + path.string());
  return parse_ruleset(in, path.string());
}

/// Token stream the filter sees: lowercased, split on whitespace and on
/// ellipses, with surrounding punctuation removed.
inline std::vector<std::string> filter_tokens(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '.' && i + 1 < text.size() && text[i + 1] == '.') {
      while (i < text.size() && text[i] == '.') ++i;
      --i;
      norm += ' ';
    } else if (text.compare(i, 3, "\xE2\x80\x99") == 0) {  // right single quote
      norm += '\'';
      i += 2;
    } else {
      norm += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
    }
  }
  std::vector<std::string> tokens;
  constexpr std::string_view strip = ".,!?\"();:";
  std::size_t i = 0;
  while (i < norm.size()) {
    while (i < norm.size() && detail::is_space(static_cast<unsigned char>(norm[i]))) ++i;
    std::size_t j = i;
    while (j < norm.size() && !detail::is_space(static_cast<unsigned char>(norm[j]))) ++j;
    std::string_view tok(norm.data() + i, j - i);
    while (!tok.empty() && strip.find(tok.front()) != std::string_view::npos) tok.remove_prefix(1);
    while (!tok.empty() && strip.find(tok.back()) != std::string_view::npos) tok.remove_suffix(1);
    if (!tok.empty()) tokens.emplace_back(tok);
    i = j;
  }
  return tokens;
}

inline bool rule_matches(const RulePattern& rule, std::span<const std::string> tokens) {
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    if (!detail::advance(rule.elements, {start}, tokens).empty()) return true;
  }
  return false;
}

inline MatchResult filter_match(const RuleSet& rules, std::string_view anon_text) {
  const auto tokens = filter_tokens(anon_text);
  MatchResult result;
  for (const auto& rule : rules.rules) {
    if (rule_matches(rule, tokens)) result.rule_ids.push_back(rule.id);
  }
  result.matched = !result.rule_ids.empty();
  return result;
}

inline MatchResult filter_match(const RuleSet& rules, const Message& msg) {
  return filter_match(rules, msg.anon_text);
}

/// Uniform sample of n filter-matched messages, sorted by id.
inline std::vector<Message> sample_matched(std::span<const Message> corpus, const RuleSet& rules, std::size_t n,
                                           std::uint64_t seed) {
  std::vector<Message> matched;
  for (const auto& m : corpus) {
    if (filter_match(rules, m).matched) matched.push_back(m);
  }
  if (n > matched.size()) {
    throw InputError("requested sample of " + std::to_string(n) + " but only " + std::to_string(matched.size()) +
                     " messages match");
  }
  std::sort(matched.begin(), matched.end(), [](const Message& a, const Message& b) { return a.id < b.id; });
  Rng rng(substream_seed(seed, "sample"));
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(matched[i], matched[i + rng.below(matched.size() - i)]);
  }
  matched.resize(n);
  std::sort(matched.begin(), matched.end(), [](const Message& a, const Message& b) { return a.id < b.id; });
  return matched;
}

// ---------------------------------------------------------------------------
// Corpus files: JSON Lines {"id", "text", "source"}.
// ---------------------------------------------------------------------------

inline std::vector<Message> parse_corpus(std::istream& in, const std::string& source_name = "<corpus>") {
  std::vector<Message> out;
  std::set<std::string> ids;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto msg = make_message(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                              parse_source(j.value("source", std::string("synthetic"))));
      if (msg.id.empty()) throw InputError("empty id");
      if (!ids.insert(msg.id).second) throw InputError("duplicate id '" + msg.id + "'");
      out.push_back(std::move(msg));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source_name, lineno, e.what());
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
  }
  return out;
}

inline std::vector<Message> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

inline void write_corpus(std::ostream& out, std::span<const Message> messages, bool anonymized = false) {
  for (const auto& m : messages) {
    nlohmann::json j = {{"id", m.id},
                        {"text", anonymized ? m.anon_text : m.raw_text},
                        {"source", std::string(to_string(m.source))}};
    out << j.dump() << '\n';
  }
}

}  // namespace crowdlabel
