#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <sstream>

#include "crowdlabel/annotation.hpp"
#include "crowdlabel/corpus.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/synth.hpp"

namespace testutil {

namespace fs = std::filesystem;

inline fs::path data_dir() { return CROWDLABEL_DATA_DIR; }
inline fs::path fixture_dir() { return data_dir() / "fixtures" / "synthetic"; }
inline fs::path rules_path() { return data_dir() / "rules" / "c0.rules"; }
inline fs::path lexicon_path() { return data_dir() / "lexicon" / "lemmas.tsv"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("crowdlabel-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Crowd annotations for one item from a label string such as "AAADD".
inline std::vector<crowdlabel::Annotation> crowd(const std::string& item, const std::string& labels,
                                                 double trust = 1.0) {
  std::vector<crowdlabel::Annotation> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back({item, "w" + std::to_string(i + 1), crowdlabel::parse_label(std::string(1, labels[i])),
                   crowdlabel::Round::crowd, trust});
  }
  return out;
}

inline crowdlabel::Annotation expert(const std::string& item, const std::string& who, char label) {
  return {item, who, crowdlabel::parse_label(std::string(1, label)), crowdlabel::Round::expert, 1.0};
}

inline void append(std::vector<crowdlabel::Annotation>& to, const std::vector<crowdlabel::Annotation>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

inline void write_annotations(const fs::path& path, std::span<const crowdlabel::Annotation> anns) {
  std::ostringstream out;
  for (const auto& a : anns) out << crowdlabel::to_json(a).dump() << '\n';
  crowdlabel::write_file_atomic(path, out.str());
}

/// Writes corpus.jsonl and annotations.jsonl for a generated study into dir.
inline crowdlabel::SyntheticStudy write_study(const fs::path& dir, std::size_t items, std::uint64_t seed) {
  crowdlabel::SynthConfig cfg;
  cfg.items = items;
  cfg.seed = seed;
  auto study = crowdlabel::generate_study(cfg);
  std::ostringstream corpus;
  crowdlabel::write_corpus(corpus, study.messages);
  crowdlabel::write_file_atomic(dir / "corpus.jsonl", corpus.str());
  write_annotations(dir / "annotations.jsonl", study.annotations);
  return study;
}

}  // namespace testutil
