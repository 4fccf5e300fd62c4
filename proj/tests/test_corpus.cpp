#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "crowdlabel/corpus.hpp"
#include "crowdlabel/random.hpp"
#include "test_util.hpp"

using namespace crowdlabel;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

RuleSet rules_from(const std::string& text) {
  std::istringstream in(text);
  return parse_ruleset(in, "test.rules");
}

}  // namespace

TEST(Anonymize, ReplacesHandle) { EXPECT_EQ(anonymize("@john call me"), "@SOMEONE call me"); }

TEST(Anonymize, ReplacesLink) { EXPECT_EQ(anonymize("see http://t.co/abc now"), "see HTTP://LINK now"); }

TEST(Anonymize, IdentityWithoutHandlesOrLinks) { EXPECT_EQ(anonymize("no handles here"), "no handles here"); }

TEST(Anonymize, HttpsAndWwwAndCase) {
  EXPECT_EQ(anonymize("go to https://x.org/a?b=1, ok"), "go to HTTP://LINK ok");
  EXPECT_EQ(anonymize("WWW.example.com rocks"), "HTTP://LINK rocks");
  EXPECT_EQ(anonymize("Http://A.B"), "HTTP://LINK");
}

TEST(Anonymize, LeavesEmailAndBareAt) {
  EXPECT_EQ(anonymize("mail me@home.com"), "mail me@home.com");
  EXPECT_EQ(anonymize("meet @ 5"), "meet @ 5");
  EXPECT_EQ(anonymize("awww.. so cute"), "awww.. so cute");
}

TEST(Anonymize, HandleStopsAtNonWordCharacter) {
  EXPECT_EQ(anonymize("@jane_doe99: hi"), "@SOMEONE: hi");
  EXPECT_EQ(anonymize("(@bob) hey"), "(@bob) hey");
}

TEST(Anonymize, PreservesMultibyteText) {
  const std::string s = "caf\xC3\xA9 \xF0\x9F\x98\xA2 @x";
  EXPECT_EQ(anonymize(s), "caf\xC3\xA9 \xF0\x9F\x98\xA2 @SOMEONE");
}

TEST(AnonymizeProperty, Idempotent) {
  Rng rng(7);
  const std::vector<std::string> pieces{"@a", "@SOMEONE", "http://x.y/z", "www.q", "hi", " ", "  ", "@", ".", "HTTP://LINK",
                                        "https://", "x@y", "@_", "tab\t", "www", "::"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t k = rng.below(8) + 1; k > 0; --k) s += rng.pick(std::span<const std::string>(pieces));
    const auto once = anonymize(s);
    EXPECT_EQ(anonymize(once), once) << "input: " << s;
  }
}

TEST(AnonymizeProperty, NoHandleOrLinkSurvives) {
  Rng rng(11);
  const std::vector<std::string> pieces{"@bob", "http://a", "https://b", "www.c", "word", " "};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    for (std::size_t k = rng.below(10) + 1; k > 0; --k) s += rng.pick(std::span<const std::string>(pieces)) + " ";
    const auto out = anonymize(s);
    EXPECT_EQ(out.find("@bob"), std::string::npos);
    EXPECT_EQ(out.find("http://a"), std::string::npos);
    EXPECT_EQ(out.find("www.c"), std::string::npos);
  }
}

TEST(RuleParse, AlternationOptionalGap) {
  auto r = parse_rule("Took/taken (my/your) own life");
  EXPECT_EQ(r.template_text, "took/taken ( my/your ) own life");
  EXPECT_EQ(r.id, r.template_text);
  auto g = parse_rule("these ... thoughts");
  EXPECT_TRUE(rule_matches(g, filter_tokens("these thoughts")));
  EXPECT_TRUE(rule_matches(g, filter_tokens("these dark sad awful thoughts")));
  EXPECT_FALSE(rule_matches(g, filter_tokens("these are really very dark thoughts")));
}

TEST(RuleParse, OptionalGroupBothWays) {
  auto r = parse_rule("took/taken (my/your) own life");
  EXPECT_FALSE(rule_matches(r, filter_tokens("he took his own life")));
  EXPECT_FALSE(rule_matches(r, filter_tokens("she has taken her own life")));
  EXPECT_TRUE(rule_matches(r, filter_tokens("i took my own life")));
  EXPECT_TRUE(rule_matches(r, filter_tokens("taken own life")));
}

TEST(RuleParse, MalformedTemplates) {
  EXPECT_THROW(parse_rule("(unclosed"), InputError);
  EXPECT_THROW(parse_rule("closed)"), InputError);
  EXPECT_THROW(parse_rule("..."), InputError);
  EXPECT_THROW(parse_rule("(optional only)"), InputError);
  EXPECT_THROW(parse_rule("a//b"), InputError);
  EXPECT_THROW(parse_rule("   "), InputError);
}

TEST(LoadRuleset, SingleRuleFile) {
  auto rs = rules_from("kill/killing/hate myself\n");
  ASSERT_EQ(rs.rules.size(), 1u);
  EXPECT_EQ(rs.name, "C0");
}

TEST(LoadRuleset, EmptyFileRejected) {
  EXPECT_THROW(rules_from(""), InputError);
  EXPECT_THROW(rules_from("# only a comment\n\n"), InputError);
}

TEST(LoadRuleset, UnbalancedParenReportsLine) {
  try {
    rules_from("want to die\n# comment\ntook (my own life\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("test.rules:3"), std::string::npos);
  }
}

TEST(LoadRuleset, MissingFile) { EXPECT_THROW(load_ruleset("/nonexistent/c0.rules"), InputError); }

TEST(LoadRuleset, BundledRulesetLoads) {
  auto rs = load_ruleset(testutil::rules_path());
  EXPECT_GE(rs.rules.size(), 20u);
}

TEST(FilterMatch, KillMyselfRule) {
  auto rs = load_ruleset(testutil::rules_path());
  auto m = filter_match(rs, make_message("1", "I'd rather kill myself than commit suicide"));
  EXPECT_TRUE(m.matched);
  EXPECT_NE(std::find(m.rule_ids.begin(), m.rule_ids.end(), "kill/killing/hate myself"), m.rule_ids.end());
}

TEST(FilterMatch, HealthAdviceRule) {
  auto rs = load_ruleset(testutil::rules_path());
  auto m = filter_match(rs, make_message("1", "@SOMEONE wishing you good health and happiness"));
  EXPECT_TRUE(m.matched);
  EXPECT_NE(std::find(m.rule_ids.begin(), m.rule_ids.end(), "web/blog/health/advice"), m.rule_ids.end());
}

TEST(FilterMatch, InnocuousSentence) {
  auto rs = load_ruleset(testutil::rules_path());
  EXPECT_FALSE(filter_match(rs, make_message("1", "the weather is nice")).matched);
}

TEST(FilterMatch, CaseInsensitiveAndPunctuation) {
  auto rs = rules_from("want/wanted to die\n");
  EXPECT_TRUE(filter_match(rs, "I WANT to die!!!").matched);
  EXPECT_TRUE(filter_match(rs, "\"wanted, to die\"").matched);
  EXPECT_FALSE(filter_match(rs, "wanting to die").matched);
}

TEST(FilterMatch, EllipsisSplitsTokens) {
  auto rs = rules_from("depression\n");
  EXPECT_TRUE(filter_match(rs, "in hell...depression is eating at me").matched);
}

TEST(FilterMatch, CurlyApostrophe) {
  auto rs = rules_from("can't go on\n");
  EXPECT_TRUE(filter_match(rs, "i can\xE2\x80\x99t go on").matched);
}

TEST(FilterMatch, MatchesOnAnonymizedText) {
  auto rs = rules_from("advice\n");
  EXPECT_FALSE(filter_match(rs, make_message("1", "see http://advice.com")).matched);
}

TEST(FilterMatchProperty, MonotoneInRuleAddition) {
  const auto full = load_ruleset(testutil::rules_path());
  auto corpus = read_lines(testutil::data_dir() / "fixtures" / "table2_messages.txt");
  for (const auto& l : read_lines(testutil::data_dir() / "fixtures" / "innocuous.txt")) corpus.push_back(l);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    RuleSet sub;
    for (const auto& r : full.rules) {
      if (rng.bernoulli(0.4)) sub.rules.push_back(r);
    }
    RuleSet super = sub;
    super.rules.push_back(full.rules[rng.below(full.rules.size())]);
    for (const auto& text : corpus) {
      const auto msg = make_message("x", text);
      const auto a = filter_match(sub, msg);
      const auto b = filter_match(super, msg);
      if (a.matched) {
        EXPECT_TRUE(b.matched) << text;
      }
      bool any = false;
      for (const auto& r : sub.rules) any = any || rule_matches(r, filter_tokens(msg.anon_text));
      EXPECT_EQ(a.matched, any);
    }
  }
}

TEST(SampleMatched, ExhaustiveSample) {
  auto rs = rules_from("help\n");
  std::vector<Message> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(make_message("m" + std::to_string(i), "please help"));
  for (int i = 0; i < 5; ++i) corpus.push_back(make_message("n" + std::to_string(i), "nothing"));
  auto s = sample_matched(corpus, rs, 10, 1);
  ASSERT_EQ(s.size(), 10u);
  for (const auto& m : s) EXPECT_EQ(m.id[0], 'm');
}

TEST(SampleMatched, DeterministicAndSubset) {
  auto rs = rules_from("help\n");
  std::vector<Message> corpus;
  for (int i = 0; i < 40; ++i) {
    corpus.push_back(make_message("m" + std::to_string(i), i % 3 ? "please help" : "nothing here"));
  }
  auto a = sample_matched(corpus, rs, 7, 42);
  auto b = sample_matched(corpus, rs, 7, 42);
  ASSERT_EQ(a.size(), 7u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_TRUE(filter_match(rs, a[i]).matched);
  }
  bool differs = false;
  for (std::uint64_t seed = 43; seed < 53 && !differs; ++seed) {
    auto c = sample_matched(corpus, rs, 7, seed);
    for (std::size_t i = 0; i < c.size(); ++i) differs = differs || c[i].id != a[i].id;
  }
  EXPECT_TRUE(differs);
}

TEST(SampleMatched, EmptyAndOversized) {
  auto rs = rules_from("help\n");
  std::vector<Message> corpus{make_message("a", "help"), make_message("b", "no")};
  EXPECT_TRUE(sample_matched(corpus, rs, 0, 1).empty());
  EXPECT_THROW(sample_matched(corpus, rs, 2, 1), InputError);
}

TEST(CorpusFile, RoundTrip) {
  std::istringstream in(
      "{\"id\":\"t1\",\"text\":\"@amy hi http://x\",\"source\":\"source1\"}\n"
      "\n"
      "{\"id\":\"t2\",\"text\":\"plain\",\"source\":\"source2\"}\n");
  auto msgs = parse_corpus(in);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].anon_text, "@SOMEONE hi HTTP://LINK");
  EXPECT_EQ(msgs[1].source, Source::source2);
  std::ostringstream out;
  write_corpus(out, msgs);
  std::istringstream back(out.str());
  auto again = parse_corpus(back);
  EXPECT_EQ(again[0].raw_text, msgs[0].raw_text);
}

TEST(CorpusFile, DuplicateIdReportsLine) {
  std::istringstream in("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
  try {
    parse_corpus(in, "c.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(CorpusFile, MalformedJsonReportsLine) {
  std::istringstream in("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\": \n");
  try {
    parse_corpus(in, "c.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(CorpusFile, UnknownSource) {
  std::istringstream in("{\"id\":\"a\",\"text\":\"x\",\"source\":\"twitter\"}\n");
  EXPECT_THROW(parse_corpus(in), ParseError);
}
