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

#include "lexbridge/tokenizer.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lexbridge/corpus.hpp"

namespace lexbridge {
namespace {

std::vector<std::string> with_specials(std::vector<std::string> rest) {
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  tokens.insert(tokens.end(), rest.begin(), rest.end());
  return tokens;
}

std::vector<Document> docs_from(const std::string& text) {
  return {{"d0", "", text}};
}

TEST(TrainVocab, MergesRepeatedCharacterRuns) {
  // "aaa" twice: base units "a" and "##a". The highest likelihood-ratio pair
  // is (a, ##a) -> "aa", then (aa, ##a) -> "aaa".
  const auto vocab = train_vocab(docs_from("aaa aaa"), 10);
  EXPECT_LE(vocab.size(), 10u);
  EXPECT_TRUE(vocab.contains("a"));
  EXPECT_TRUE(vocab.contains("aaa"));
}

TEST(TrainVocab, SpecialTokensOccupyReservedIds) {
  const auto vocab = train_vocab(docs_from("kot pies"), 40);
  for (std::size_t i = 0; i < kNumSpecialTokens; ++i) {
    EXPECT_EQ(vocab.token(static_cast<std::uint32_t>(i)), kSpecialTokens[i]);
  }
}

TEST(TrainVocab, EveryObservedCharacterHasAToken) {
  // Characters get tokens in the position form they were observed:
  // word-initial without prefix, word-internal with "##".
  const auto vocab = train_vocab(docs_from("ala ma kota tósz"), 200);
  for (const std::string c : {"a", "m", "k", "t"}) {
    EXPECT_TRUE(vocab.contains(c)) << c;
  }
  for (const std::string c : {"##l", "##a", "##o", "##s", "##z", "##ó"}) {
    EXPECT_TRUE(vocab.contains(c)) << c;
  }
}

TEST(TrainVocab, TrainingWordsEncodeWithoutUnk) {
  const std::string text = "ala ma kota i psa tósz żółw";
  const auto vocab = train_vocab(docs_from(text), 64);
  const auto tok = encode(vocab, text);
  for (const auto id : tok.token_ids) EXPECT_NE(id, kUnkId);
}

TEST(TrainVocab, RejectsEmptyCorpus) {
  EXPECT_THROW(train_vocab(std::vector<Document>{}, 100), DataError);
  EXPECT_THROW(train_vocab(docs_from("   "), 100), DataError);
}

TEST(TrainVocab, RejectsTargetSizeBelowAlphabet) {
  // "abc" needs 5 specials + a, ##b, ##c.
  EXPECT_THROW(train_vocab(docs_from("abc"), 7), ConfigError);
  EXPECT_NO_THROW(train_vocab(docs_from("abc"), 8));
}

TEST(TrainVocab, DeterministicForFixedInput) {
  const std::string text = "ala ma kota a kot ma alę i sowę";
  const auto a = train_vocab(docs_from(text), 48);
  const auto b = train_vocab(docs_from(text), 48);
  EXPECT_EQ(a.tokens(), b.tokens());
}

TEST(Encode, EmptyTextYieldsNothing) {
  const auto vocab = train_vocab(docs_from("abc"), 16);
  const auto tok = encode(vocab, "");
  EXPECT_TRUE(tok.token_ids.empty());
  EXPECT_TRUE(tok.word_spans.empty());
}

TEST(Encode, WholeWordHitIsSingleToken) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"kot", "k", "##o", "##t"}));
  const auto tok = encode(vocab, "kot");
  ASSERT_EQ(tok.token_ids.size(), 1u);
  EXPECT_EQ(vocab.token(tok.token_ids[0]), "kot");
  ASSERT_EQ(tok.word_spans.size(), 1u);
  EXPECT_EQ(tok.word_spans[0].count, 1u);
}

TEST(Encode, GreedyLongestMatchTrace) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"x", "##y", "##z", "##yz", "xy"}));
  // Greedy takes the longest word-initial prefix "xy", then "##z".
  const auto tok = encode(vocab, "xyz");
  std::vector<std::string> pieces;
  for (const auto id : tok.token_ids) pieces.push_back(vocab.token(id));
  EXPECT_EQ(pieces, (std::vector<std::string>{"xy", "##z"}));

  // Without "xy" the trace is x, ##y, ##z in one span of 3.
  const auto vocab2 = Vocabulary::from_tokens(with_specials({"x", "##y", "##z"}));
  const auto tok2 = encode(vocab2, "xyz");
  pieces.clear();
  for (const auto id : tok2.token_ids) pieces.push_back(vocab2.token(id));
  EXPECT_EQ(pieces, (std::vector<std::string>{"x", "##y", "##z"}));
  ASSERT_EQ(tok2.word_spans.size(), 1u);
  EXPECT_EQ(tok2.word_spans[0].start, 0u);
  EXPECT_EQ(tok2.word_spans[0].count, 3u);
}

TEST(Encode, UncoverableWordBecomesSingleUnk) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"a", "##a"}));
  const auto tok = encode(vocab, "aqa");
  ASSERT_EQ(tok.token_ids.size(), 1u);
  EXPECT_EQ(tok.token_ids[0], kUnkId);
  ASSERT_EQ(tok.word_spans.size(), 1u);
  EXPECT_EQ(tok.word_spans[0].count, 1u);
}

TEST(Encode, SpanCountsCoverAllTokens) {
  const std::string text = "ala ma kota i psa w domu";
  const auto vocab = train_vocab(docs_from(text), 30);
  const auto tok = encode(vocab, text + " dom kota");
  std::size_t total = 0;
  for (const auto& span : tok.word_spans) total += span.count;
  EXPECT_EQ(total, tok.token_ids.size());
}

TEST(Decode, EmptyInput) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"a"}));
  EXPECT_EQ(decode(vocab, std::vector<std::uint32_t>{}), "");
}

TEST(Decode, RoundTripOnCoverableText) {
  const std::string text = "ala  ma\tkota";
  const auto vocab = train_vocab(docs_from("ala ma kota"), 40);
  const auto tok = encode(vocab, text);
  EXPECT_EQ(decode(vocab, tok.token_ids), "ala ma kota");
}

TEST(Decode, UnkSurfacesLiterally) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"a", "##a"}));
  const auto tok = encode(vocab, "aqa a");
  EXPECT_EQ(decode(vocab, tok.token_ids), "[UNK] a");
}

TEST(Decode, RejectsOutOfRangeId) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"a"}));
  const std::vector<std::uint32_t> ids{99};
  EXPECT_THROW(decode(vocab, ids), DataError);
}

TEST(RoundTrip, HoldsForEveryTrainingDocument) {
  SynthPairSpec spec;
  spec.mapping_seed = 5;
  spec.n_word_types = 60;
  spec.n_docs = 25;
  const auto pair = generate_synthetic_pair(spec);
  const auto vocab = train_vocab(pair.target_docs, 160);
  for (const auto& doc : pair.target_docs) {
    const auto tok = encode(vocab, doc.text);
    EXPECT_EQ(decode(vocab, tok.token_ids), utf8::normalize_ws(doc.text)) << doc.id;
  }
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const auto vocab = train_vocab(docs_from("ala ma kota tósz"), 48);
  const auto path = std::filesystem::temp_directory_path() / "vocab_rt.txt";
  vocab.save(path);
  EXPECT_EQ(Vocabulary::load(path), vocab);
}

TEST(Vocabulary, LoadRejectsMissingSpecials) {
  const auto path = std::filesystem::temp_directory_path() / "vocab_bad.txt";
  {
    std::ofstream out(path);
    out << "[PAD]\n[UNK]\nkot\n";
  }
  EXPECT_THROW(Vocabulary::load(path), DataError);
}

TEST(Vocabulary, RejectsDuplicates) {
  EXPECT_THROW(Vocabulary::from_tokens(with_specials({"a", "a"})), DataError);
}

TEST(Vocabulary, TokenLookupIsExact) {
  const auto vocab = Vocabulary::from_tokens(with_specials({"Kot", "kot"}));
  EXPECT_NE(vocab.id_of("Kot"), vocab.id_of("kot"));
  EXPECT_FALSE(vocab.id_of("missing").has_value());
}

}  // namespace
}  // namespace lexbridge
