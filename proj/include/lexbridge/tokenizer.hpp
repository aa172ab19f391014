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

#ifndef LEXBRIDGE_TOKENIZER_HPP
#define LEXBRIDGE_TOKENIZER_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lexbridge/common.hpp"
#include "lexbridge/corpus.hpp"
#include "lexbridge/utf8.hpp"

namespace lexbridge {

inline constexpr std::array<const char*, 5> kSpecialTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                              "[MASK]"};
inline constexpr std::uint32_t kPadId = 0;
inline constexpr std::uint32_t kUnkId = 1;
inline constexpr std::uint32_t kClsId = 2;
inline constexpr std::uint32_t kSepId = 3;
inline constexpr std::uint32_t kMaskId = 4;
inline constexpr std::size_t kNumSpecialTokens = 5;
inline constexpr const char* kContinuationPrefix = "##";

inline bool has_continuation_prefix(std::string_view token) {
  return token.size() > 2 && token.substr(0, 2) == kContinuationPrefix;
}

/// Immutable ordered token set. Ids are dense 0..size-1; ids 0-4 are the
/// special tokens [PAD], [UNK], [CLS], [SEP], [MASK].
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kNumSpecialTokens) {
      throw DataError("vocabulary must contain the five special tokens");
    }
    for (std::size_t i = 0; i < kNumSpecialTokens; ++i) {
      if (tokens[i] != kSpecialTokens[i]) {
        throw DataError("vocabulary id " + std::to_string(i) + " must be " +
                        std::string(kSpecialTokens[i]) + ", found '" + tokens[i] + "'");
      }
    }
    Vocabulary vocab;
    vocab.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
      if (vocab.tokens_[i].empty()) {
        throw DataError("vocabulary id " + std::to_string(i) + " is empty");
      }
      if (!vocab.ids_.emplace(vocab.tokens_[i], static_cast<std::uint32_t>(i)).second) {
        throw DataError("duplicate vocabulary token '" + vocab.tokens_[i] + "'");
      }
    }
    return vocab;
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& token(std::uint32_t id) const {
    if (id >= tokens_.size()) {
      throw DataError("token id " + std::to_string(id) + " out of range (vocab size " +
                      std::to_string(tokens_.size()) + ")");
    }
    return tokens_[id];
  }

  std::optional<std::uint32_t> id_of(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view token) const { return id_of(token).has_value(); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  /// One token per line; line number equals id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary file: " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
    return from_tokens(std::move(tokens));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct WordSpan {
  std::size_t start = 0;  // index into token_ids
  std::size_t count = 0;  // number of tokens for this word
};

struct Tokenization {
  std::vector<std::uint32_t> token_ids;
  std::vector<WordSpan> word_spans;
};

namespace detail {

/// Symbol sequence for one distinct word during vocabulary training.
struct TrainWord {
  std::vector<std::string> symbols;
  std::size_t count = 0;
};

}  // namespace detail

/// Trains a WordPiece-style subword vocabulary: starts from the observed
/// character alphabet (word-initial and "##"-continuation forms) and
/// repeatedly merges the adjacent symbol pair maximizing
/// count(AB) / (count(A) * count(B)) until target_size tokens exist or no
/// pair is left. Ties break on the lexicographically smallest pair, so the
/// result is a pure function of the corpus.
inline Vocabulary train_vocab(std::span<const Document> docs, std::size_t target_size) {
  // Word frequency map over the NFC-normalized corpus.
  std::map<std::string, std::size_t> word_counts;
  for (const auto& doc : docs) {
    const std::string text = utf8::normalize_nfc(doc.text);
    for (const auto word : utf8::split_words(text)) {
      ++word_counts[std::string(word)];
    }
  }
  if (word_counts.empty()) throw DataError("cannot train a vocabulary on an empty corpus");

  std::vector<detail::TrainWord> words;
  std::map<std::string, std::size_t> base_units;
  for (const auto& [word, count] : word_counts) {
    detail::TrainWord tw;
    tw.count = count;
    const auto offsets = utf8::codepoint_offsets(word);
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
      std::string unit(word.substr(offsets[i], offsets[i + 1] - offsets[i]));
      if (i > 0) unit = kContinuationPrefix + unit;
      ++base_units[unit];
      tw.symbols.push_back(std::move(unit));
    }
    words.push_back(std::move(tw));
  }

  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (const auto& [unit, _] : base_units) tokens.push_back(unit);
  if (tokens.size() > target_size) {
    throw ConfigError("target_size " + std::to_string(target_size) +
                      " too small for alphabet: need at least " + std::to_string(tokens.size()) +
                      " tokens");
  }

  while (tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    std::map<std::string, std::size_t> symbol_counts;
    for (const auto& tw : words) {
      for (std::size_t i = 0; i < tw.symbols.size(); ++i) {
        symbol_counts[tw.symbols[i]] += tw.count;
        if (i + 1 < tw.symbols.size()) {
          pair_counts[{tw.symbols[i], tw.symbols[i + 1]}] += tw.count;
        }
      }
    }
    if (pair_counts.empty()) break;

    const std::pair<std::string, std::string>* best = nullptr;
    double best_score = -1.0;
    for (const auto& [pair, count] : pair_counts) {
      const double score = static_cast<double>(count) /
                           (static_cast<double>(symbol_counts[pair.first]) *
                            static_cast<double>(symbol_counts[pair.second]));
      // Map iteration is ordered, so ">" keeps the lexicographically
      // smallest pair among equals.
      if (score > best_score) {
        best_score = score;
        best = &pair;
      }
    }

    std::string merged = best->first;
    std::string_view second(best->second);
    if (second.substr(0, 2) == kContinuationPrefix) second.remove_prefix(2);
    merged += second;

    const std::string first_sym = best->first;
    const std::string second_sym = best->second;
    for (auto& tw : words) {
      std::vector<std::string> next;
      next.reserve(tw.symbols.size());
      for (std::size_t i = 0; i < tw.symbols.size();) {
        if (i + 1 < tw.symbols.size() && tw.symbols[i] == first_sym &&
            tw.symbols[i + 1] == second_sym) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(tw.symbols[i]);
          ++i;
        }
      }
      tw.symbols = std::move(next);
    }

    if (std::find(tokens.begin(), tokens.end(), merged) == tokens.end()) {
      tokens.push_back(merged);
    }
  }

  return Vocabulary::from_tokens(std::move(tokens));
}

/// Greedy longest-match segmentation of a single word (no whitespace).
/// Returns {[UNK]} when some character cannot be covered.
inline std::vector<std::uint32_t> encode_word(const Vocabulary& vocab, std::string_view word) {
  std::vector<std::uint32_t> ids;
  if (word.empty()) return ids;
  const auto offsets = utf8::codepoint_offsets(word);
  std::size_t begin = 0;  // index into offsets
  const std::size_t n = offsets.size() - 1;
  while (begin < n) {
    std::optional<std::uint32_t> match;
    std::size_t match_end = begin;
    for (std::size_t end = n; end > begin; --end) {
      std::string piece(word.substr(offsets[begin], offsets[end] - offsets[begin]));
      if (begin > 0) piece = kContinuationPrefix + piece;
      if (const auto id = vocab.id_of(piece)) {
        match = id;
        match_end = end;
        break;
      }
    }
    if (!match) return {kUnkId};
    ids.push_back(*match);
    begin = match_end;
  }
  return ids;
}

/// Tokenizes whitespace-separated words with word-boundary tracking.
/// Text is NFC-normalized first; case is preserved. No special tokens
/// are inserted.
inline Tokenization encode(const Vocabulary& vocab, std::string_view text) {
  Tokenization result;
  const std::string normalized = utf8::normalize_nfc(text);
  for (const auto word : utf8::split_words(normalized)) {
    const auto ids = encode_word(vocab, word);
    result.word_spans.push_back({result.token_ids.size(), ids.size()});
    result.token_ids.insert(result.token_ids.end(), ids.begin(), ids.end());
  }
  return result;
}

/// Inverse of encode on fully coverable text: continuation pieces are glued
/// to the preceding piece, other tokens start a new space-separated word.
inline std::string decode(const Vocabulary& vocab, std::span<const std::uint32_t> ids) {
  std::string out;
  bool word_open = false;
  for (const auto id : ids) {
    const std::string& tok = vocab.token(id);
    if (word_open && has_continuation_prefix(tok)) {
      out.append(tok.substr(2));
    } else {
      if (!out.empty()) out.push_back(' ');
      out.append(tok);
      word_open = true;
    }
  }
  return out;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_TOKENIZER_HPP
