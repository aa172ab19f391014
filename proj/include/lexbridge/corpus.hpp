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

#ifndef LEXBRIDGE_CORPUS_HPP
#define LEXBRIDGE_CORPUS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexbridge/common.hpp"
#include "lexbridge/utf8.hpp"

namespace lexbridge {

struct Document {
  std::string id;
  std::string title;
  std::string text;

  bool operator==(const Document&) const = default;
};

struct CorpusStats {
  std::size_t n_docs = 0;
  std::size_t n_words = 0;
};

/// Loads a JSON-lines corpus: one object per line with string fields
/// "id", "title", "text". Blank lines are skipped. Any malformed line
/// aborts with its 1-based line number.
inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::vector<Document> docs;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw DataError("corpus line " + std::to_string(line_no) + ": not a JSON object");
    }
    Document doc;
    for (const char* key : {"id", "title", "text"}) {
      if (!obj.contains(key) || !obj[key].is_string()) {
        throw DataError("corpus line " + std::to_string(line_no) + ": missing string field '" +
                        key + "'");
      }
    }
    doc.id = obj["id"].get<std::string>();
    doc.title = obj["title"].get<std::string>();
    doc.text = obj["text"].get<std::string>();
    if (!utf8::is_valid(doc.text) || !utf8::is_valid(doc.title) || !utf8::is_valid(doc.id)) {
      throw DataError("corpus line " + std::to_string(line_no) + ": invalid UTF-8");
    }
    if (!seen_ids.insert(doc.id).second) {
      throw DataError("corpus line " + std::to_string(line_no) + ": duplicate id '" + doc.id +
                      "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline void save_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  for (const auto& doc : docs) {
    nlohmann::json obj{{"id", doc.id}, {"title", doc.title}, {"text", doc.text}};
    out << obj.dump() << '\n';
  }
}

namespace detail {

/// Word 3-shingles; documents shorter than 3 words contribute their whole
/// word sequence as a single shingle.
inline std::set<std::string> word_shingles(std::string_view text, std::size_t k = 3) {
  const auto words = utf8::split_words(text);
  std::set<std::string> shingles;
  if (words.empty()) return shingles;
  if (words.size() < k) {
    std::string joined;
    for (const auto w : words) {
      if (!joined.empty()) joined.push_back(' ');
      joined.append(w);
    }
    shingles.insert(std::move(joined));
    return shingles;
  }
  for (std::size_t i = 0; i + k <= words.size(); ++i) {
    std::string shingle;
    for (std::size_t j = 0; j < k; ++j) {
      if (j > 0) shingle.push_back(' ');
      shingle.append(words[i + j]);
    }
    shingles.insert(std::move(shingle));
  }
  return shingles;
}

/// Jaccard similarity over shingle sets. Two empty sets count as identical.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : a) inter += b.count(s);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

/// Drops documents with fewer than min_words words, then removes near
/// duplicates: a document is kept only if its word-3-shingle Jaccard
/// similarity with every earlier kept document is below near_dup_threshold.
inline std::vector<Document> clean_corpus(std::span<const Document> docs, std::size_t min_words,
                                          double near_dup_threshold) {
  if (!(near_dup_threshold > 0.0 && near_dup_threshold <= 1.0)) {
    throw ConfigError("near_dup_threshold must lie in (0, 1]");
  }
  std::vector<Document> kept;
  std::vector<std::set<std::string>> kept_shingles;
  for (const auto& doc : docs) {
    if (utf8::count_words(doc.text) < min_words) continue;
    auto shingles = detail::word_shingles(doc.text);
    bool duplicate = false;
    for (const auto& prev : kept_shingles) {
      if (detail::jaccard(shingles, prev) >= near_dup_threshold) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    kept.push_back(doc);
    kept_shingles.push_back(std::move(shingles));
  }
  return kept;
}

inline CorpusStats corpus_stats(std::span<const Document> docs) {
  CorpusStats stats;
  stats.n_docs = docs.size();
  for (const auto& doc : docs) stats.n_words += utf8::count_words(doc.text);
  return stats;
}

struct SynthPairSpec {
  std::string alphabet = "abcdefghij";
  std::size_t n_word_types = 120;
  std::size_t n_docs = 100;          // per language
  std::size_t doc_len_min = 20;      // words
  std::size_t doc_len_max = 40;
  std::uint64_t mapping_seed = 0;
  double dictionary_coverage = 0.5;  // fraction of word types in the emitted dictionary

  void validate() const {
    if (alphabet.empty()) throw ConfigError("synth alphabet must be non-empty");
    if (n_word_types == 0) throw ConfigError("n_word_types must be positive");
    if (n_docs == 0) throw ConfigError("n_docs must be positive");
    if (doc_len_min == 0 || doc_len_max < doc_len_min) {
      throw ConfigError("doc length range must satisfy 0 < min <= max");
    }
    if (!(dictionary_coverage >= 0.0 && dictionary_coverage <= 1.0)) {
      throw ConfigError("dictionary_coverage must lie in [0, 1]");
    }
  }
};

struct SynthPair {
  std::vector<Document> source_docs;
  std::vector<Document> target_docs;
  /// Emitted dictionary entries, target word -> source word.
  std::vector<std::pair<std::string, std::string>> dictionary;
  /// The complete word bijection the pair was built from (dictionary ⊆ this).
  std::vector<std::pair<std::string, std::string>> full_mapping;
};

namespace detail {

/// Cumulative-weight sampler over ranks 0..n-1 with P(r) ∝ 1/(r+1)^s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cumulative_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cumulative_[r] = total;
    }
    for (auto& c : cumulative_) c /= total;
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    return it == cumulative_.end() ? cumulative_.size() - 1
                                   : static_cast<std::size_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

inline std::string random_word(const std::string& alphabet, Rng& rng) {
  const std::size_t len = 2 + rng.below(7);  // 2..8 characters
  std::string w;
  w.reserve(len);
  for (std::size_t i = 0; i < len; ++i) w.push_back(alphabet[rng.below(alphabet.size())]);
  return w;
}

}  // namespace detail

/// Generates two corpora over disjoint word inventories linked by a bijection.
/// Documents follow a seeded bigram chain whose successor tables are drawn
/// from a Zipf(1.0) distribution over ranks, so word frequencies stay
/// Zipf-like while neighbouring words carry predictive signal. Source
/// documents are the word-by-word images of the target documents under the
/// bijection, so the two corpora share frequency structure exactly.
inline SynthPair generate_synthetic_pair(const SynthPairSpec& spec) {
  spec.validate();
  Rng master(spec.mapping_seed);
  Rng word_rng = master.fork();
  Rng table_rng = master.fork();
  Rng doc_rng = master.fork();
  Rng dict_rng = master.fork();

  const std::size_t n = spec.n_word_types;

  // 2n unique surface forms; first half source, second half target.
  std::vector<std::string> forms;
  std::unordered_set<std::string> used;
  while (forms.size() < 2 * n) {
    std::string w = detail::random_word(spec.alphabet, word_rng);
    if (used.insert(w).second) forms.push_back(std::move(w));
  }
  std::vector<std::string> source_types(forms.begin(), forms.begin() + n);
  std::vector<std::string> target_types(forms.begin() + n, forms.end());

  // Rank-space bigram structure shared by both languages.
  detail::ZipfSampler zipf(n, 1.0);
  struct Successors {
    std::size_t rank[3];
  };
  std::vector<Successors> successors(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (int j = 0; j < 3; ++j) successors[r].rank[j] = zipf.sample(table_rng);
  }
  const auto next_rank = [&](std::size_t prev, Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.6) return successors[prev].rank[0];
    if (u < 0.9) return successors[prev].rank[1];
    return successors[prev].rank[2];
  };

  SynthPair pair;
  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    const std::size_t len =
        spec.doc_len_min + doc_rng.below(spec.doc_len_max - spec.doc_len_min + 1);
    std::vector<std::size_t> ranks(len);
    ranks[0] = zipf.sample(doc_rng);
    for (std::size_t t = 1; t < len; ++t) ranks[t] = next_rank(ranks[t - 1], doc_rng);

    std::string source_text, target_text;
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) {
        source_text.push_back(' ');
        target_text.push_back(' ');
      }
      source_text += source_types[ranks[t]];
      target_text += target_types[ranks[t]];
    }
    const std::string num = std::to_string(d);
    pair.source_docs.push_back({"src-" + num, "synthetic " + num, std::move(source_text)});
    pair.target_docs.push_back({"tgt-" + num, "synthetic " + num, std::move(target_text)});
  }

  for (std::size_t r = 0; r < n; ++r) {
    pair.full_mapping.emplace_back(target_types[r], source_types[r]);
  }

  const std::size_t n_entries =
      static_cast<std::size_t>(std::llround(spec.dictionary_coverage * static_cast<double>(n)));
  std::vector<std::size_t> perm(n);
  for (std::size_t r = 0; r < n; ++r) perm[r] = r;
  shuffle(perm, dict_rng);
  perm.resize(n_entries);
  std::sort(perm.begin(), perm.end());
  for (const std::size_t r : perm) {
    pair.dictionary.emplace_back(target_types[r], source_types[r]);
  }
  return pair;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_CORPUS_HPP
