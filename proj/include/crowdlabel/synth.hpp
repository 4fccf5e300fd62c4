#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "annotation.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "random.hpp"

namespace crowdlabel {

// Synthetic stand-in for a two-round annotation study. Every item has a true
// category and is either easy (its text carries cues of that category only)
// or hard (its text mixes in cues of a confusable category). Crowd workers are
// accurate on easy items and unreliable on hard ones, so unanimity tracks
// label correctness; experts are more reliable than the crowd on hard items.

struct SynthConfig {
  std::size_t items = 2000;
  std::size_t worker_pool = 40;
  std::size_t workers_per_item = 5;
  double hard_fraction = 0.7;
  double easy_accuracy = 0.93;
  double hard_accuracy = 0.45;
  double confuser_share = 0.7;  // share of wrong crowd votes that go to the confusable category
  double expert_accuracy = 0.85;
  std::array<double, kNumLabels> prior{0.09, 0.16, 0.27, 0.48};
  double source1_share = 0.6;
  std::uint64_t seed = 1;
};

struct SyntheticStudy {
  std::vector<Message> messages;
  std::vector<Annotation> annotations;
  std::map<std::string, Label> truth;
  std::map<std::string, bool> hard;
};

namespace synth_detail {

inline const std::array<std::vector<std::string_view>, kNumLabels>& cue_bank() {
  static const std::array<std::vector<std::string_view>, kNumLabels> bank{{
      {"i want to die", "i can't go on", "thinking about killing myself", "i hate myself so much",
       "my depression is getting worse", "i just want to end my life", "nobody would miss me, i want to die",
       "suicidal thoughts again tonight", "i don't want to be alive", "i can't take it anymore",
       "depression is eating me alive", "i tried to kill myself", "thinking about suicide again",
       "i feel like a burden and want to die", "i cry myself to sleep with these dark thoughts",
       "end it all tonight", "i feel so empty i want to die", "my depression makes me want to kill myself"},
      {"please call for help", "call the suicide lifeline", "the crisis hotline is open all night",
       "you are not alone, talk to someone", "seek help if you are struggling", "free mental health advice",
       "stop bullying", "reach out and ask for help", "suicide prevention saves lives",
       "talk to somebody you trust", "health advice for anyone struggling", "an offer of help is always here",
       "check on your friends, suicide is preventable", "share the suicide lifeline number"},
      {"robin williams committed suicide", "rip robin williams, suicide is so sad", "suicide bomber attack in the city",
       "news report on suicide rates", "that movie about suicide was intense", "this song about depression is beautiful",
       "police said he took his own life", "celebrity suicide all over the news", "article about depression in teens",
       "documentary on suicide tonight", "soldier commits suicide after returning home",
       "suicide squad trailer is out", "another suicide bomber in the news"},
      {"fuck this homework", "my boyfriend forgot my birthday", "my girlfriend is mad at me",
       "this traffic is killing me, fuck", "i'm just like my mom honestly", "hanging out with friends",
       "miss you guys already", "web design class all day", "fucking alarm did not go off",
       "that workout was suicide", "bad thoughts about pizza at midnight", "my boyfriend is just like his dad",
       "fuck mondays", "this exam is pure suicide lol"},
  }};
  return bank;
}

inline const std::vector<std::string_view>& filler_bank() {
  static const std::vector<std::string_view> bank{
      "today", "honestly", "right now", "tonight", "lol", "again", "so", "really", "this week", "at school",
      "at work", "omg", "ugh", "seriously", "for real", "smh", "anyway", "literally", "idk", "man"};
  return bank;
}

inline Label confuser(Label l) {
  switch (l) {
    case Label::A: return Label::D;
    case Label::B: return Label::C;
    case Label::C: return Label::B;
    case Label::D: return Label::C;
  }
  return Label::D;
}

inline Label draw_label(Rng& rng, const std::array<double, kNumLabels>& prior) {
  double total = 0.0;
  for (double p : prior) total += p;
  double u = rng.uniform() * total;
  for (Label l : kLabels) {
    u -= prior[index(l)];
    if (u < 0.0) return l;
  }
  return Label::D;
}

inline Label noisy_vote(Rng& rng, Label truth, double accuracy, double confuser_share) {
  if (rng.bernoulli(accuracy)) return truth;
  if (rng.bernoulli(confuser_share)) return confuser(truth);
  // Uniform over the two remaining categories.
  std::vector<Label> rest;
  for (Label l : kLabels) {
    if (l != truth && l != confuser(truth)) rest.push_back(l);
  }
  return rest[rng.below(rest.size())];
}

inline std::string pad_id(std::string_view prefix, std::size_t n, std::size_t width) {
  std::string digits = std::to_string(n);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

}  // namespace synth_detail

inline SyntheticStudy generate_study(const SynthConfig& cfg) {
  if (cfg.items == 0) throw InputError("synthetic study needs at least one item");
  if (cfg.workers_per_item == 0 || cfg.workers_per_item > cfg.worker_pool) {
    throw InputError("workers per item must lie in [1, worker pool]");
  }
  using namespace synth_detail;
  Rng rng(substream_seed(cfg.seed, "synth"));
  SyntheticStudy study;

  std::vector<double> trust(cfg.worker_pool);
  for (auto& t : trust) t = std::round(rng.uniform(0.6, 1.0) * 100.0) / 100.0;

  const auto& bank = cue_bank();
  const auto& fillers = filler_bank();
  for (std::size_t i = 0; i < cfg.items; ++i) {
    const std::string id = pad_id("m", i + 1, 5);
    const Label truth = draw_label(rng, cfg.prior);
    const bool hard = rng.bernoulli(cfg.hard_fraction);

    std::vector<std::string> parts;
    if (rng.bernoulli(0.25)) parts.push_back("@user" + std::to_string(rng.below(900) + 100));
    parts.emplace_back(rng.pick(bank[index(truth)]));
    if (hard) {
      std::string other(rng.pick(bank[index(confuser(truth))]));
      if (rng.bernoulli(0.5)) parts.push_back(std::move(other));
      else parts.insert(parts.begin(), std::move(other));
    }
    for (std::size_t f = rng.below(4); f > 0; --f) parts.emplace_back(rng.pick(fillers));
    if (rng.bernoulli(0.15)) parts.push_back("http://t.co/" + std::to_string(rng.next() % 1000000));
    std::string text;
    for (const auto& p : parts) {
      if (!text.empty()) text += ' ';
      text += p;
    }
    const Source source = static_cast<double>(i) < cfg.source1_share * static_cast<double>(cfg.items)
                              ? Source::source1
                              : Source::source2;
    study.messages.push_back(make_message(id, text, source));
    study.truth.emplace(id, truth);
    study.hard.emplace(id, hard);

    // Five distinct workers from the pool.
    std::vector<std::size_t> pool(cfg.worker_pool);
    for (std::size_t w = 0; w < pool.size(); ++w) pool[w] = w;
    for (std::size_t w = 0; w < cfg.workers_per_item; ++w) {
      std::swap(pool[w], pool[w + rng.below(pool.size() - w)]);
    }
    std::vector<Annotation> crowd;
    for (std::size_t w = 0; w < cfg.workers_per_item; ++w) {
      const double acc = hard ? cfg.hard_accuracy : cfg.easy_accuracy;
      crowd.push_back({id, pad_id("w", pool[w] + 1, 2), noisy_vote(rng, truth, acc, cfg.confuser_share),
                       Round::crowd, trust[pool[w]]});
    }
    const bool unanimous = unanimous_label(distribution(crowd)).has_value();
    study.annotations.insert(study.annotations.end(), crowd.begin(), crowd.end());
    if (!unanimous) {
      for (std::string_view expert : {"expert1", "expert2"}) {
        study.annotations.push_back({id, std::string(expert),
                                     noisy_vote(rng, truth, cfg.expert_accuracy, cfg.confuser_share),
                                     Round::expert, 1.0});
      }
    }
  }
  return study;
}

}  // namespace crowdlabel
