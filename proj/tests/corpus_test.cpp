// Copyright 2026 The LexBridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lexbridge/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace lexbridge {
namespace {

namespace fs = std::filesystem;

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

// Independent shingle oracle: enumerate word 3-grams by hand.
std::set<std::string> oracle_shingles(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  std::set<std::string> shingles;
  if (words.size() < 3) {
    std::string joined;
    for (const auto& word : words) {
      if (!joined.empty()) joined += ' ';
      joined += word;
    }
    if (!joined.empty()) shingles.insert(joined);
    return shingles;
  }
  for (std::size_t i = 0; i + 3 <= words.size(); ++i) {
    shingles.insert(words[i] + " " + words[i + 1] + " " + words[i + 2]);
  }
  return shingles;
}

double oracle_jaccard(const std::string& a, const std::string& b) {
  const auto sa = oracle_shingles(a);
  const auto sb = oracle_shingles(b);
  std::size_t inter = 0;
  for (const auto& s : sa) inter += sb.count(s);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

TEST(LoadCorpus, EmptyFileYieldsEmptySequence) {
  const auto path = write_temp("corpus_empty.jsonl", "");
  EXPECT_TRUE(load_corpus(path).empty());
}

TEST(LoadCorpus, PreservesFileOrder) {
  const auto path = write_temp("corpus_two.jsonl",
                               R"({"id":"a","title":"A","text":"first doc"})"
                               "\n"
                               R"({"id":"b","title":"B","text":"second doc"})"
                               "\n");
  const auto docs = load_corpus(path);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].id, "a");
  EXPECT_EQ(docs[0].text, "first doc");
  EXPECT_EQ(docs[1].id, "b");
}

TEST(LoadCorpus, MissingTextFieldNamesLine) {
  const auto path = write_temp("corpus_bad.jsonl",
                               R"({"id":"a","title":"A","text":"x"})"
                               "\n"
                               R"({"id":"b","title":"B","text":"y"})"
                               "\n"
                               R"({"id":"c","title":"C"})"
                               "\n");
  try {
    load_corpus(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("text"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, RejectsDuplicateIds) {
  const auto path = write_temp("corpus_dup.jsonl",
                               R"({"id":"a","title":"","text":"x"})"
                               "\n"
                               R"({"id":"a","title":"","text":"y"})"
                               "\n");
  EXPECT_THROW(load_corpus(path), DataError);
}

TEST(LoadCorpus, RejectsInvalidUtf8) {
  const auto path =
      write_temp("corpus_utf8.jsonl", std::string(R"({"id":"a","title":"","text":")") +
                                          "\xC3\x28" + R"("})" + "\n");
  EXPECT_THROW(load_corpus(path), DataError);
}

TEST(SaveCorpus, RoundTrips) {
  std::vector<Document> docs{{"a", "T", "ala ma kota"}, {"b", "U", "kot ma alę"}};
  const fs::path path = fs::temp_directory_path() / "corpus_rt.jsonl";
  save_corpus(path, docs);
  EXPECT_EQ(load_corpus(path), docs);
}

TEST(CleanCorpus, RemovesShortDocuments) {
  std::vector<Document> docs{{"a", "", "one two three"}};
  EXPECT_TRUE(clean_corpus(docs, 5, 0.9).empty());
  EXPECT_EQ(clean_corpus(docs, 3, 0.9).size(), 1u);
}

TEST(CleanCorpus, FirstOfExactDuplicatesSurvives) {
  std::vector<Document> docs{{"a", "", "w x y z w x y z"}, {"b", "", "w x y z w x y z"}};
  const auto kept = clean_corpus(docs, 0, 0.9);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].id, "a");
}

TEST(CleanCorpus, MidSimilarityPairSurvivesBelowThreshold) {
  // Shared 3-word tail; Jaccard verified with the exhaustive shingle oracle.
  const std::string a = "p q r s t";
  const std::string b = "u q r s t";
  // Shingles(a) = {p q r, q r s, r s t}; shingles(b) = {u q r, q r s, r s t}.
  // Intersection 2, union 4 -> 0.5.
  ASSERT_DOUBLE_EQ(oracle_jaccard(a, b), 0.5);
  std::vector<Document> docs{{"a", "", a}, {"b", "", b}};
  EXPECT_EQ(clean_corpus(docs, 0, 0.8).size(), 2u);
  EXPECT_EQ(clean_corpus(docs, 0, 0.5).size(), 1u);
}

TEST(CleanCorpus, IsIdempotent) {
  Rng rng(7);
  std::vector<Document> docs;
  const std::vector<std::string> vocab{"ala", "ma", "kota", "psa", "dom", "las"};
  for (int i = 0; i < 40; ++i) {
    std::string text;
    const std::size_t len = 1 + rng.below(8);
    for (std::size_t j = 0; j < len; ++j) {
      if (!text.empty()) text += ' ';
      text += vocab[rng.below(vocab.size())];
    }
    docs.push_back({"d" + std::to_string(i), "", text});
  }
  for (const double threshold : {0.3, 0.6, 0.9, 1.0}) {
    for (const std::size_t min_words : {std::size_t{0}, std::size_t{2}, std::size_t{4}}) {
      const auto once = clean_corpus(docs, min_words, threshold);
      const auto twice = clean_corpus(once, min_words, threshold);
      EXPECT_EQ(once, twice) << "threshold=" << threshold << " min_words=" << min_words;
    }
  }
}

TEST(CleanCorpus, RejectsBadThreshold) {
  std::vector<Document> docs;
  EXPECT_THROW(clean_corpus(docs, 0, 0.0), ConfigError);
  EXPECT_THROW(clean_corpus(docs, 0, 1.5), ConfigError);
}

TEST(CorpusStats, EmptyCorpus) {
  const auto stats = corpus_stats(std::vector<Document>{});
  EXPECT_EQ(stats.n_docs, 0u);
  EXPECT_EQ(stats.n_words, 0u);
}

TEST(CorpusStats, HandCountWithRepeatedWhitespace) {
  std::vector<Document> docs{{"a", "", "a b  c"}};
  const auto stats = corpus_stats(docs);
  EXPECT_EQ(stats.n_docs, 1u);
  EXPECT_EQ(stats.n_words, 3u);
}

TEST(CorpusStats, CleaningNeverAddsWords) {
  Rng rng(11);
  std::vector<Document> docs;
  for (int i = 0; i < 30; ++i) {
    std::string text;
    for (std::size_t j = 0; j < rng.below(12); ++j) {
      text += (j ? " w" : "w") + std::to_string(rng.below(5));
    }
    docs.push_back({"d" + std::to_string(i), "", text});
  }
  const auto before = corpus_stats(docs);
  const auto after = corpus_stats(clean_corpus(docs, 2, 0.7));
  EXPECT_LE(after.n_words, before.n_words);
}

TEST(SyntheticPair, ZeroCoverageGivesEmptyDictionary) {
  SynthPairSpec spec;
  spec.n_word_types = 50;
  spec.n_docs = 5;
  spec.dictionary_coverage = 0.0;
  const auto pair = generate_synthetic_pair(spec);
  EXPECT_TRUE(pair.dictionary.empty());
  EXPECT_EQ(pair.full_mapping.size(), 50u);
}

TEST(SyntheticPair, SameSeedIsByteIdentical) {
  SynthPairSpec spec;
  spec.mapping_seed = 42;
  spec.n_docs = 10;
  const auto a = generate_synthetic_pair(spec);
  const auto b = generate_synthetic_pair(spec);
  EXPECT_EQ(a.source_docs, b.source_docs);
  EXPECT_EQ(a.target_docs, b.target_docs);
  EXPECT_EQ(a.dictionary, b.dictionary);
}

TEST(SyntheticPair, CoverageCountIsExact) {
  SynthPairSpec spec;
  spec.n_word_types = 100;
  spec.n_docs = 3;
  spec.dictionary_coverage = 0.5;
  EXPECT_EQ(generate_synthetic_pair(spec).dictionary.size(), 50u);
}

TEST(SyntheticPair, InventoriesAreDisjoint) {
  SynthPairSpec spec;
  spec.mapping_seed = 3;
  const auto pair = generate_synthetic_pair(spec);
  std::set<std::string> source_words, target_words;
  for (const auto& [target, source] : pair.full_mapping) {
    target_words.insert(target);
    source_words.insert(source);
  }
  EXPECT_EQ(source_words.size(), spec.n_word_types);
  EXPECT_EQ(target_words.size(), spec.n_word_types);
  for (const auto& w : target_words) EXPECT_EQ(source_words.count(w), 0u);
}

TEST(SyntheticPair, MappingReproducesSourceFrequencies) {
  SynthPairSpec spec;
  spec.mapping_seed = 9;
  spec.n_docs = 20;
  spec.dictionary_coverage = 0.3;
  const auto pair = generate_synthetic_pair(spec);
  std::map<std::string, std::string> mapping(pair.full_mapping.begin(), pair.full_mapping.end());

  std::map<std::string, std::size_t> mapped_target_freq, source_freq;
  for (const auto& doc : pair.target_docs) {
    for (const auto word : utf8::split_words(doc.text)) {
      mapped_target_freq[mapping.at(std::string(word))]++;
    }
  }
  for (const auto& doc : pair.source_docs) {
    for (const auto word : utf8::split_words(doc.text)) {
      source_freq[std::string(word)]++;
    }
  }
  EXPECT_EQ(mapped_target_freq, source_freq);
}

TEST(SyntheticPair, RejectsBadCoverage) {
  SynthPairSpec spec;
  spec.dictionary_coverage = 1.5;
  EXPECT_THROW(generate_synthetic_pair(spec), ConfigError);
  spec.dictionary_coverage = -0.1;
  EXPECT_THROW(generate_synthetic_pair(spec), ConfigError);
}

}  // namespace
}  // namespace lexbridge
