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

#include "lexbridge/lexicon.hpp"

#include <filesystem>
#include <fstream>
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

TEST(LoadDictionary, SingleEntryLookup) {
  const auto path = write_temp("dict_one.tsv", "tósz\tpies\n");
  const auto dict = BilingualDictionary::load(path);
  EXPECT_EQ(dict.size(), 1u);
  EXPECT_EQ(dict.lookup_token("tósz"), (std::vector<std::string>{"pies"}));
}

TEST(LoadDictionary, EmptyFileIsValid) {
  const auto path = write_temp("dict_empty.tsv", "");
  EXPECT_EQ(BilingualDictionary::load(path).size(), 0u);
}

TEST(LoadDictionary, CommentsAndBlankLinesSkipped) {
  const auto path = write_temp("dict_comments.tsv", "# header\n\ntósz\tpies\n# trailing\n");
  EXPECT_EQ(BilingualDictionary::load(path).size(), 1u);
}

TEST(LoadDictionary, DuplicateTargetsMergeInOrder) {
  const auto path = write_temp("dict_merge.tsv", "a\tb\na\tc\n");
  const auto dict = BilingualDictionary::load(path);
  EXPECT_EQ(dict.size(), 1u);
  EXPECT_EQ(dict.lookup_token("a"), (std::vector<std::string>{"b", "c"}));
}

TEST(LoadDictionary, MalformedRowNamesLine) {
  const auto path = write_temp("dict_bad.tsv", "a\tb\nno_translation\n");
  try {
    BilingualDictionary::load(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(LoadDictionary, NormalizesCase) {
  const auto path = write_temp("dict_case.tsv", "Tósz\tPies\n");
  const auto dict = BilingualDictionary::load(path);
  EXPECT_EQ(dict.lookup_token("tósz"), (std::vector<std::string>{"pies"}));
  EXPECT_EQ(dict.lookup_token("TÓSZ"), (std::vector<std::string>{"pies"}));
}

TEST(LookupToken, ContinuationTokensAreNeverWords) {
  const auto dict = BilingualDictionary::from_entries({{"ósz", {"ogon"}}});
  EXPECT_TRUE(dict.lookup_token("##ósz").empty());
  EXPECT_FALSE(dict.lookup_token("ósz").empty());
}

TEST(LookupToken, MultiWordTranslationsAreFiltered) {
  const auto dict = BilingualDictionary::from_entries({{"x", {"two words"}}});
  EXPECT_EQ(dict.size(), 1u);
  EXPECT_TRUE(dict.lookup_token("x").empty());
}

TEST(LookupToken, MixedTranslationsKeepSingleWordOnes) {
  const auto dict = BilingualDictionary::from_entries({{"x", {"a b", "c", "d e", "f"}}});
  EXPECT_EQ(dict.lookup_token("x"), (std::vector<std::string>{"c", "f"}));
}

TEST(LookupToken, MissingKeyGivesEmpty) {
  const auto dict = BilingualDictionary::from_entries({{"a", {"b"}}});
  EXPECT_TRUE(dict.lookup_token("zzz").empty());
}

TEST(Dictionary, SaveLoadRoundTrip) {
  const auto dict = BilingualDictionary::from_entries(
      {{"tósz", {"pies"}}, {"gwiôzda", {"gwiazda", "star light"}}, {"a", {"b", "c"}}});
  const auto path = fs::temp_directory_path() / "dict_rt.tsv";
  dict.save(path);
  EXPECT_EQ(BilingualDictionary::load(path), dict);
}

TEST(Dictionary, LookupImpliesSingleWordTranslationExists) {
  Rng rng(13);
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> translations;
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t j = 0; j < n; ++j) {
      std::string t = "t" + std::to_string(rng.below(100));
      if (rng.below(3) == 0) t += " tail";  // some multi-word entries
      translations.push_back(t);
    }
    rows.push_back({"w" + std::to_string(i), translations});
  }
  const auto dict = BilingualDictionary::from_entries(rows);
  for (int i = 0; i < 60; ++i) {
    const std::string token = "w" + std::to_string(rng.below(70));
    const auto result = dict.lookup_token(token);
    if (!result.empty()) {
      ASSERT_NE(dict.find(BilingualDictionary::normalize(token)), nullptr);
      for (const auto& t : result) {
        EXPECT_EQ(utf8::split_words(t).size(), 1u);
      }
    }
  }
}

}  // namespace
}  // namespace lexbridge
