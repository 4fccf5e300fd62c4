#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace crowdlabel {

/// Lowercase tokens, none empty, none containing whitespace.
using TokenStream = std::vector<std::string>;

inline constexpr std::array<std::string_view, 6> kEmoticons{":)", ":(", ":/", ";)", ":D", "D:"};

namespace detail {

inline bool space_byte(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline void lower_in_place(std::string& s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

}  // namespace detail

/// Rule-based tweet tokenizer. Splits on whitespace (and on runs of two or
/// more dots), keeps emoticons whole, and strips .,!?"();: from both ends of
/// every other token. Handles, links, hashtags and contractions survive as
/// single tokens because none of them contain whitespace.
inline TokenStream tokenize(std::string_view text) {
  static constexpr std::string_view strip = ".,!?\"();:";
  TokenStream out;
  std::size_t i = 0;
  auto emit = [&](std::string_view raw) {
    for (auto emo : kEmoticons) {
      if (raw == emo) {
        std::string t(raw);
        detail::lower_in_place(t);
        out.push_back(std::move(t));
        return;
      }
    }
    while (!raw.empty() && strip.find(raw.front()) != std::string_view::npos) raw.remove_prefix(1);
    while (!raw.empty() && strip.find(raw.back()) != std::string_view::npos) raw.remove_suffix(1);
    if (raw.empty()) return;
    std::string t(raw);
    detail::lower_in_place(t);
    out.push_back(std::move(t));
  };
  while (i < text.size()) {
    while (i < text.size() && detail::space_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::space_byte(static_cast<unsigned char>(text[j]))) ++j;
    // Split "hell...depression" at the ellipsis; a trailing "..." is plain punctuation.
    std::string_view word = text.substr(i, j - i);
    std::size_t start = 0;
    for (std::size_t k = 0; k + 1 < word.size(); ++k) {
      if (word[k] == '.' && word[k + 1] == '.') {
        std::size_t e = k;
        while (e < word.size() && word[e] == '.') ++e;
        if (k > start) emit(word.substr(start, k - start));
        start = e;
        k = e - 1;
      }
    }
    if (start < word.size()) emit(word.substr(start));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lemmatizer: lexicon lookup, then suffix rules.
// ---------------------------------------------------------------------------

class Lemmatizer {
 public:
  Lemmatizer() = default;

  explicit Lemmatizer(std::unordered_map<std::string, std::string> lexicon) : lexicon_(std::move(lexicon)) {}

  /// Lexicon file: `form<TAB>lemma` per line, `#` comments.
  static Lemmatizer parse(std::istream& in, const std::string& source_name = "<lexicon>") {
    std::unordered_map<std::string, std::string> lex;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
        throw ParseError(source_name, lineno, "expected form<TAB>lemma");
      }
      std::string form = line.substr(0, tab);
      std::string lemma = line.substr(tab + 1);
      detail::lower_in_place(form);
      detail::lower_in_place(lemma);
      lex[form] = lemma;
    }
    return Lemmatizer(std::move(lex));
  }

  static Lemmatizer load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open lexicon " + path.string());
    return parse(in, path.string());
  }

  const std::unordered_map<std::string, std::string>& lexicon() const { return lexicon_; }

  std::string lemma(std::string_view token) const {
    if (token.empty() || token[0] == '@' || token[0] == '#' || token.substr(0, 4) == "http") {
      return std::string(token);
    }
    if (auto it = lexicon_.find(std::string(token)); it != lexicon_.end()) return it->second;
    const bool alphabetic = std::all_of(token.begin(), token.end(), [](unsigned char c) {
      return c >= 'a' && c <= 'z';
    });
    if (!alphabetic) return std::string(token);
    return strip_suffix(std::string(token));
  }

  TokenStream apply(const TokenStream& tokens) const {
    TokenStream out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(lemma(t));
    return out;
  }

 private:
  static bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  static bool has_vowel(std::string_view s) {
    return s.find_first_of("aeiouy") != std::string_view::npos;
  }

  // Drops a doubled final consonant (stopp -> stop), except l, s and z.
  static std::string undouble(std::string stem) {
    const std::size_t n = stem.size();
    if (n >= 2 && stem[n - 1] == stem[n - 2] && std::string_view("aeiouylsz").find(stem[n - 1]) == std::string_view::npos) {
      stem.pop_back();
    }
    return stem;
  }

  static std::string strip_suffix(std::string w) {
    if (ends_with(w, "ies") && w.size() - 3 >= 2 && w.size() - 2 >= 3) {
      return w.substr(0, w.size() - 3) + "y";
    }
    if (ends_with(w, "ing")) {
      std::string stem = w.substr(0, w.size() - 3);
      if (stem.size() >= 3 && has_vowel(stem)) return undouble(std::move(stem));
      return w;
    }
    if (ends_with(w, "ed")) {
      std::string stem = w.substr(0, w.size() - 2);
      if (stem.size() >= 3 && has_vowel(stem)) return undouble(std::move(stem));
      return w;
    }
    if (ends_with(w, "es")) {
      std::string stem = w.substr(0, w.size() - 2);
      if (stem.size() >= 3 && (ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") ||
                               ends_with(stem, "ch") || ends_with(stem, "sh"))) {
        return stem;
      }
    }
    if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
      std::string stem = w.substr(0, w.size() - 1);
      if (stem.size() >= 3) return stem;
    }
    return w;
  }

  std::unordered_map<std::string, std::string> lexicon_;
};

/// Contiguous 1-, 2- and 3-grams joined by single spaces; the multiset has
/// L + max(L-1,0) + max(L-2,0) elements.
inline std::vector<std::string> extract_ngrams(const TokenStream& tokens) {
  std::vector<std::string> out;
  const std::size_t n = tokens.size();
  out.reserve(3 * n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(tokens[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) out.push_back(tokens[i] + ' ' + tokens[i + 1]);
  for (std::size_t i = 0; i + 2 < n; ++i) out.push_back(tokens[i] + ' ' + tokens[i + 1] + ' ' + tokens[i + 2]);
  return out;
}

/// Sorted, de-duplicated n-grams of one message.
inline std::vector<std::string> ngram_set(const TokenStream& tokens) {
  auto grams = extract_ngrams(tokens);
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

// ---------------------------------------------------------------------------
// Vocabulary and vectorization.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultVocabularySize = 10'000;

struct Vocabulary {
  std::vector<std::string> entries;    // document frequency desc, then lexicographic
  std::vector<std::size_t> doc_freq;   // parallel to entries
  std::unordered_map<std::string, std::uint32_t> index;
  std::size_t max_size = kDefaultVocabularySize;

  std::size_t size() const { return entries.size(); }

  std::optional<std::uint32_t> find(const std::string& ngram) const {
    auto it = index.find(ngram);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& ngram) const { return index.count(ngram) > 0; }
};

/// Builds from documents already reduced to their n-gram sets.
inline Vocabulary build_vocabulary_from_sets(std::span<const std::vector<std::string>* const> docs,
                                             std::size_t max_size) {
  if (docs.empty()) throw InputError("vocabulary over an empty corpus");
  if (max_size == 0) throw InputError("vocabulary size must be at least 1");
  std::unordered_map<std::string_view, std::size_t> df;
  for (const auto* doc : docs) {
    for (const auto& g : *doc) ++df[g];
  }
  std::vector<std::pair<std::string_view, std::size_t>> ranked(df.begin(), df.end());
  const std::size_t keep = std::min(max_size, ranked.size());
  auto order = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), order);
  Vocabulary v;
  v.max_size = max_size;
  v.entries.reserve(keep);
  v.doc_freq.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    v.entries.emplace_back(ranked[i].first);
    v.doc_freq.push_back(ranked[i].second);
    v.index.emplace(v.entries.back(), static_cast<std::uint32_t>(i));
  }
  return v;
}

inline Vocabulary build_vocabulary(std::span<const TokenStream> corpus, std::size_t max_size = kDefaultVocabularySize) {
  std::vector<std::vector<std::string>> sets;
  sets.reserve(corpus.size());
  for (const auto& doc : corpus) sets.push_back(ngram_set(doc));
  std::vector<const std::vector<std::string>*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  return build_vocabulary_from_sets(ptrs, max_size);
}

/// Binary presence vector: sorted active positions.
struct FeatureVector {
  std::size_t dimension = 0;
  std::vector<std::uint32_t> active;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector vectorize_set(std::span<const std::string> ngrams, const Vocabulary& vocab) {
  FeatureVector fv{vocab.size(), {}};
  for (const auto& g : ngrams) {
    if (auto pos = vocab.find(g)) fv.active.push_back(*pos);
  }
  std::sort(fv.active.begin(), fv.active.end());
  fv.active.erase(std::unique(fv.active.begin(), fv.active.end()), fv.active.end());
  return fv;
}

inline FeatureVector vectorize(const TokenStream& tokens, const Vocabulary& vocab) {
  return vectorize_set(extract_ngrams(tokens), vocab);
}

inline void write_vocabulary_csv(std::ostream& out, const Vocabulary& vocab) {
  out << "rank,ngram,doc_freq\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << (i + 1) << ',' << csv_field(vocab.entries[i]) << ',' << vocab.doc_freq[i] << '\n';
  }
}

/// tokenize -> lemmatize, the per-message front end of the feature pipeline.
inline TokenStream prepare(std::string_view anon_text, const Lemmatizer& lemmatizer) {
  return lemmatizer.apply(tokenize(anon_text));
}

}  // namespace crowdlabel
