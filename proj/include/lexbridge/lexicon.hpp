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

#ifndef LEXBRIDGE_LEXICON_HPP
#define LEXBRIDGE_LEXICON_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lexbridge/common.hpp"
#include "lexbridge/utf8.hpp"

namespace lexbridge {

/// Target-word -> source-translation associations. Both sides are stored
/// NFC-normalized and lowercased; duplicate target rows merge with
/// first-seen translation order preserved.
class BilingualDictionary {
 public:
  BilingualDictionary() = default;

  static BilingualDictionary from_entries(
      const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
    BilingualDictionary dict;
    for (const auto& [target, translations] : rows) {
      dict.add(target, translations);
    }
    return dict;
  }

  /// TSV: column 1 target word, columns 2..n translations. Lines starting
  /// with '#' are comments; blank lines are skipped. A row without at least
  /// one non-empty translation aborts with its line number.
  static BilingualDictionary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dictionary file: " + path.string());
    BilingualDictionary dict;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      if (!utf8::is_valid(line)) {
        throw DataError("dictionary line " + std::to_string(line_no) + ": invalid UTF-8");
      }
      std::vector<std::string> cells;
      std::size_t start = 0;
      while (true) {
        const std::size_t tab = line.find('\t', start);
        cells.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (cells.size() < 2 || cells[0].empty()) {
        throw DataError("dictionary line " + std::to_string(line_no) +
                        ": expected target word and at least one translation");
      }
      std::vector<std::string> translations;
      for (std::size_t c = 1; c < cells.size(); ++c) {
        if (!cells[c].empty()) translations.push_back(cells[c]);
      }
      if (translations.empty()) {
        throw DataError("dictionary line " + std::to_string(line_no) + ": no translation given");
      }
      dict.add(cells[0], translations);
    }
    return dict;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dictionary file: " + path.string());
    for (const auto& [target, translations] : entries_) {
      out << target;
      for (const auto& t : translations) out << '\t' << t;
      out << '\n';
    }
  }

  std::size_t size() const { return entries_.size(); }

  const std::vector<std::string>* find(std::string_view normalized_target) const {
    const auto it = entries_.find(std::string(normalized_target));
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Resolves a vocabulary token to candidate source translations.
  /// Continuation-prefixed tokens are never looked up; the lookup key is the
  /// lowercased NFC token; translations containing whitespace are dropped.
  std::vector<std::string> lookup_token(std::string_view token,
                                        std::string_view continuation_prefix = "##") const {
    if (!continuation_prefix.empty() && token.size() > continuation_prefix.size() &&
        token.substr(0, continuation_prefix.size()) == continuation_prefix) {
      return {};
    }
    const std::string key = normalize(token);
    const auto* translations = find(key);
    if (translations == nullptr) return {};
    std::vector<std::string> result;
    for (const auto& t : *translations) {
      if (utf8::split_words(t).size() == 1) result.push_back(t);
    }
    return result;
  }

  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

  bool operator==(const BilingualDictionary& other) const { return entries_ == other.entries_; }

  static std::string normalize(std::string_view word) {
    return utf8::to_lower(utf8::normalize_nfc(word));
  }

 private:
  void add(std::string_view target, const std::vector<std::string>& translations) {
    auto& list = entries_[normalize(target)];
    for (const auto& raw : translations) {
      const std::string t = normalize(raw);
      if (t.empty()) continue;
      if (std::find(list.begin(), list.end(), t) == list.end()) list.push_back(t);
    }
    if (list.empty()) {
      throw DataError("dictionary entry '" + std::string(target) + "' has no translations");
    }
  }

  std::map<std::string, std::vector<std::string>> entries_;
};

}  // namespace lexbridge

#endif  // LEXBRIDGE_LEXICON_HPP
