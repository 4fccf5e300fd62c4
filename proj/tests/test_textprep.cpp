#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "crowdlabel/random.hpp"
#include "crowdlabel/textprep.hpp"
#include "test_util.hpp"

using namespace crowdlabel;

namespace {

const Lemmatizer& bundled() {
  static const Lemmatizer lem = Lemmatizer::load(testutil::lexicon_path());
  return lem;
}

Vocabulary vocab_of(const std::vector<TokenStream>& docs, std::size_t max_size = kDefaultVocabularySize) {
  return build_vocabulary(docs, max_size);
}

}  // namespace

TEST(Tokenize, Contraction) { EXPECT_EQ(tokenize("I can't go on."), (TokenStream{"i", "can't", "go", "on"})); }

TEST(Tokenize, Handle) {
  EXPECT_EQ(tokenize("@SOMEONE wishing you good health!"),
            (TokenStream{"@someone", "wishing", "you", "good", "health"}));
}

TEST(Tokenize, Hashtag) { EXPECT_EQ(tokenize("Fuck this. #useless"), (TokenStream{"fuck", "this", "#useless"})); }

TEST(Tokenize, LinkAndEmoticons) {
  EXPECT_EQ(tokenize("see HTTP://LINK :) :( :/ ;) :D D:"),
            (TokenStream{"see", "http://link", ":)", ":(", ":/", ";)", ":d", "d:"}));
}

TEST(Tokenize, EllipsisAndPunctuation) {
  EXPECT_EQ(tokenize("hell...depression (really)!! \"ok\""), (TokenStream{"hell", "depression", "really", "ok"}));
  EXPECT_EQ(tokenize("wait..."), (TokenStream{"wait"}));
  EXPECT_EQ(tokenize("  ...  !!  "), TokenStream{});
}

TEST(Tokenize, NoEmptyOrWhitespaceTokens) {
  Rng rng(1);
  const std::string alphabet = "ab .,!?\"();:'#@\t\n";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t k = rng.below(30); k > 0; --k) s += alphabet[rng.below(alphabet.size())];
    for (const auto& t : tokenize(s)) {
      EXPECT_FALSE(t.empty());
      EXPECT_EQ(t.find_first_of(" \t\n"), std::string::npos);
      for (char c : t) EXPECT_FALSE(c >= 'A' && c <= 'Z');
    }
    EXPECT_EQ(tokenize(s), tokenize(s));
  }
}

TEST(Lemmatize, Examples) {
  EXPECT_EQ(bundled().apply({"feelings"}), TokenStream{"feeling"});
  EXPECT_EQ(bundled().apply({"suicide"}), TokenStream{"suicide"});
  EXPECT_EQ(bundled().apply({"tried"}), TokenStream{"try"});
}

TEST(Lemmatize, SuffixRules) {
  Lemmatizer plain;
  EXPECT_EQ(plain.lemma("stories"), "story");
  EXPECT_EQ(plain.lemma("stopping"), "stop");
  EXPECT_EQ(plain.lemma("killing"), "kill");
  EXPECT_EQ(plain.lemma("wanted"), "want");
  EXPECT_EQ(plain.lemma("wishes"), "wish");
  EXPECT_EQ(plain.lemma("boxes"), "box");
  EXPECT_EQ(plain.lemma("thoughts"), "thought");
  EXPECT_EQ(plain.lemma("glass"), "glass");
  EXPECT_EQ(plain.lemma("bus"), "bus");
  EXPECT_EQ(plain.lemma("this"), "this");
  EXPECT_EQ(plain.lemma("sing"), "sing");
  EXPECT_EQ(plain.lemma("red"), "red");
}

TEST(Lemmatize, SpecialTokensPassThrough) {
  EXPECT_EQ(bundled().lemma("@someone"), "@someone");
  EXPECT_EQ(bundled().lemma("#feelings"), "#feelings");
  EXPECT_EQ(bundled().lemma("http://link"), "http://link");
  EXPECT_EQ(bundled().lemma(":d"), ":d");
  EXPECT_EQ(bundled().lemma("can't"), "can't");
}

TEST(LemmatizeProperty, LexiconLemmasAreFixedPoints) {
  for (const auto& [form, lemma] : bundled().lexicon()) {
    EXPECT_EQ(bundled().lemma(lemma), lemma) << form << " -> " << lemma;
  }
}

TEST(Lexicon, MalformedLineReported) {
  std::istringstream in("# header\nran\trun\nbroken line\n");
  try {
    Lemmatizer::parse(in, "lex.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Ngrams, WantToDie) {
  auto grams = extract_ngrams({"want", "to", "die"});
  std::multiset<std::string> got(grams.begin(), grams.end());
  std::multiset<std::string> want{"want", "to", "die", "want to", "to die", "want to die"};
  EXPECT_EQ(got, want);
}

TEST(Ngrams, ShortStreams) {
  EXPECT_EQ(extract_ngrams({"help"}), std::vector<std::string>{"help"});
  EXPECT_TRUE(extract_ngrams({}).empty());
}

TEST(NgramsProperty, CountIsThreeLMinusThree) {
  Rng rng(4);
  for (std::size_t len = 2; len < 40; ++len) {
    TokenStream t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(std::string(1, static_cast<char>('a' + rng.below(3))));
    EXPECT_EQ(extract_ngrams(t).size(), 3 * len - 3);
  }
}

TEST(Vocabulary, UniqueMaximum) {
  auto v = vocab_of({{"suicide", "a"}, {"suicide", "b"}, {"suicide", "c"}}, 1);
  EXPECT_EQ(v.entries, std::vector<std::string>{"suicide"});
  EXPECT_EQ(v.doc_freq, std::vector<std::size_t>{3});
}

TEST(Vocabulary, FrequencyTieIsLexicographic) {
  auto v = vocab_of({{"zebra", "apple"}});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.entries[0], "apple");
  EXPECT_EQ(v.entries[1], "zebra");
  EXPECT_EQ(v.entries[2], "zebra apple");
}

TEST(Vocabulary, UnderCapacityKeepsEverything) {
  std::vector<TokenStream> docs;
  for (int i = 0; i < 40; ++i) docs.push_back({"w" + std::to_string(i)});
  EXPECT_EQ(vocab_of(docs).size(), 40u);
}

TEST(Vocabulary, DocumentFrequencyNotTermFrequency) {
  auto v = vocab_of({{"x", "x", "x"}, {"y"}, {"y"}});
  EXPECT_EQ(v.entries[0], "y");
  EXPECT_EQ(v.doc_freq[0], 2u);
}

TEST(Vocabulary, Errors) {
  EXPECT_THROW(vocab_of({}), InputError);
  EXPECT_THROW(vocab_of({{"a"}}, 0), InputError);
}

TEST(Vectorize, Examples) {
  auto v = vocab_of({{"help"}, {"help"}, {"me"}});
  ASSERT_EQ(v.entries[0], "help");
  EXPECT_EQ(vectorize({"help"}, v).active, std::vector<std::uint32_t>{0});
  EXPECT_TRUE(vectorize({"nothing", "known"}, v).active.empty());
  EXPECT_EQ(vectorize({"help", "help", "help"}, v), vectorize({"help"}, v));
}

TEST(VectorizeProperty, DimensionEqualsVocabularySize) {
  Rng rng(8);
  std::vector<TokenStream> docs;
  for (int d = 0; d < 30; ++d) {
    TokenStream t;
    for (std::size_t k = rng.below(6) + 1; k > 0; --k) t.push_back(std::string(1, static_cast<char>('a' + rng.below(6))));
    docs.push_back(t);
  }
  for (std::size_t max : {1u, 5u, 50u, 10000u}) {
    auto v = vocab_of(docs, max);
    for (const auto& t : docs) {
      auto fv = vectorize(t, v);
      EXPECT_EQ(fv.dimension, v.size());
      EXPECT_TRUE(std::is_sorted(fv.active.begin(), fv.active.end()));
    }
  }
}

TEST(VocabularyCsv, Format) {
  auto v = vocab_of({{"a", "b,c"}});
  std::ostringstream out;
  write_vocabulary_csv(out, v);
  EXPECT_EQ(out.str(), "rank,ngram,doc_freq\n1,a,1\n2,\"a b,c\",1\n3,\"b,c\",1\n");
}

TEST(Prepare, PipelineOrder) {
  EXPECT_EQ(prepare("@SOMEONE I tried... Feelings HTTP://LINK", bundled()),
            (TokenStream{"@someone", "i", "try", "feeling", "http://link"}));
}
