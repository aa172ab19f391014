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

#ifndef LEXBRIDGE_TRANSPLANT_HPP
#define LEXBRIDGE_TRANSPLANT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexbridge/common.hpp"
#include "lexbridge/lexicon.hpp"
#include "lexbridge/model.hpp"
#include "lexbridge/tokenizer.hpp"

namespace lexbridge {

enum class MatchKind : std::uint8_t {
  kDictMatch,       // token found via a bilingual-dictionary translation
  kDirectCopy,      // identical token string exists in the source vocabulary
  kSubwordAverage,  // mean of the source tokenizer's segmentation
  kSpecial,         // special token, matched by name
};

/// Initialization recipe for one target token. Every kind except
/// kSubwordAverage references exactly one source row.
struct MatchCase {
  MatchKind kind = MatchKind::kSubwordAverage;
  std::vector<std::uint32_t> source_ids;
};

struct MatchPlan {
  std::vector<MatchCase> cases;  // one per target token id
  std::size_t source_vocab_size = 0;
};

struct TransplantReport {
  std::size_t n_dict_matched = 0;
  std::size_t n_direct_copied = 0;
  std::size_t n_subword_averaged = 0;
  std::size_t n_special = 0;

  struct Sample {
    std::string target_token;
    std::string detail;
  };
  std::vector<Sample> dict_samples;
  std::vector<Sample> copy_samples;
  std::vector<Sample> subword_samples;

  std::size_t total() const {
    return n_dict_matched + n_direct_copied + n_subword_averaged + n_special;
  }

  std::string census_line() const {
    return "matched " + std::to_string(total()) + " tokens | dict=" +
           std::to_string(n_dict_matched) + " copy=" + std::to_string(n_direct_copied) +
           " subword=" + std::to_string(n_subword_averaged) +
           " special=" + std::to_string(n_special);
  }

  nlohmann::json to_json() const {
    const auto samples_json = [](const std::vector<Sample>& samples) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : samples) arr.push_back({{"token", s.target_token}, {"via", s.detail}});
      return arr;
    };
    return nlohmann::json{{"n_dict_matched", n_dict_matched},
                          {"n_direct_copied", n_direct_copied},
                          {"n_subword_averaged", n_subword_averaged},
                          {"n_special", n_special},
                          {"samples",
                           {{"dict_match", samples_json(dict_samples)},
                            {"direct_copy", samples_json(copy_samples)},
                            {"subword_average", samples_json(subword_samples)}}}};
  }
};

inline constexpr std::size_t kReportSampleLimit = 10;

/// Assigns each target token the first applicable case:
///   1. DictMatch  — some single-word dictionary translation of the token is
///                   itself a source token;
///   2. DirectCopy — the token string (continuation prefix included) exists
///                   in the source vocabulary;
///   3. SubwordAverage — the source tokenizer's greedy segmentation of the
///                   token's surface form (prefix stripped), with [UNK] as
///                   the final fallback.
/// Special tokens are matched to their same-named source specials.
inline std::pair<MatchPlan, TransplantReport> match_vocabulary(const Vocabulary& target_vocab,
                                                               const Vocabulary& source_vocab,
                                                               const BilingualDictionary& dict) {
  MatchPlan plan;
  plan.source_vocab_size = source_vocab.size();
  plan.cases.reserve(target_vocab.size());
  TransplantReport report;

  for (std::uint32_t id = 0; id < target_vocab.size(); ++id) {
    const std::string& token = target_vocab.token(id);

    if (id < kNumSpecialTokens) {
      const auto source_id = source_vocab.id_of(token);
      if (!source_id) throw DataError("source vocabulary lacks special token " + token);
      plan.cases.push_back({MatchKind::kSpecial, {*source_id}});
      ++report.n_special;
      continue;
    }

    // Case 1: dictionary translation present as a word-initial source token.
    bool matched = false;
    for (const auto& translation : dict.lookup_token(token, kContinuationPrefix)) {
      if (const auto source_id = source_vocab.id_of(translation)) {
        plan.cases.push_back({MatchKind::kDictMatch, {*source_id}});
        ++report.n_dict_matched;
        if (report.dict_samples.size() < kReportSampleLimit) {
          report.dict_samples.push_back({token, translation});
        }
        matched = true;
        break;
      }
    }
    if (matched) continue;

    // Case 2: identical string in the source vocabulary.
    if (const auto source_id = source_vocab.id_of(token)) {
      plan.cases.push_back({MatchKind::kDirectCopy, {*source_id}});
      ++report.n_direct_copied;
      if (report.copy_samples.size() < kReportSampleLimit) {
        report.copy_samples.push_back({token, token});
      }
      continue;
    }

    // Case 3: segment the surface form with the source tokenizer.
    std::string_view surface(token);
    if (has_continuation_prefix(surface)) surface.remove_prefix(2);
    std::vector<std::uint32_t> pieces = encode_word(source_vocab, surface);
    if (pieces.empty()) pieces.push_back(kUnkId);
    if (report.subword_samples.size() < kReportSampleLimit) {
      std::string detail;
      for (const auto piece : pieces) {
        if (!detail.empty()) detail.push_back(' ');
        detail += source_vocab.token(piece);
      }
      report.subword_samples.push_back({token, detail});
    }
    plan.cases.push_back({MatchKind::kSubwordAverage, std::move(pieces)});
    ++report.n_subword_averaged;
  }

  return {std::move(plan), std::move(report)};
}

/// Materializes the target embedding matrix: copy rows for single-source
/// cases, arithmetic mean (accumulated in double) for subword averages.
template <typename Scalar>
Mat<Scalar> apply_plan(const MatchPlan& plan, const Mat<Scalar>& source_embeddings) {
  if (static_cast<std::size_t>(source_embeddings.rows()) != plan.source_vocab_size) {
    throw DataError("source embedding rows disagree with the match plan");
  }
  for (const auto& c : plan.cases) {
    if (c.source_ids.empty()) throw DataError("match case with no source ids");
    for (const auto id : c.source_ids) {
      if (id >= plan.source_vocab_size) {
        throw DataError("match plan references source id " + std::to_string(id) +
                        " beyond the source vocabulary");
      }
    }
  }

  const Eigen::Index dim = source_embeddings.cols();
  Mat<Scalar> out(static_cast<Eigen::Index>(plan.cases.size()), dim);
  parallel_for(plan.cases.size(), [&](std::size_t row) {
    const auto& c = plan.cases[row];
    if (c.kind == MatchKind::kSubwordAverage) {
      Mat<double> acc = Mat<double>::Zero(1, dim);
      for (const auto id : c.source_ids) {
        acc.row(0) += source_embeddings.row(id).template cast<double>();
      }
      acc /= static_cast<double>(c.source_ids.size());
      out.row(static_cast<Eigen::Index>(row)) = acc.row(0).template cast<Scalar>();
    } else {
      out.row(static_cast<Eigen::Index>(row)) = source_embeddings.row(c.source_ids[0]);
    }
  });
  if (!out.allFinite()) throw NumericError("non-finite values in transplanted embeddings");
  return out;
}

/// Copies every encoder parameter (layers, positional embeddings, layer
/// norms) from the source model, replaces the tied token-embedding matrix
/// with the plan's result, and re-initializes the MLM bias to zero for the
/// target vocabulary.
template <typename Scalar>
ModelWeights<Scalar> transplant_model(const ModelWeights<Scalar>& source_weights,
                                      const MatchPlan& plan) {
  if (static_cast<std::size_t>(source_weights.config.vocab_size) != plan.source_vocab_size) {
    throw DataError("source model vocabulary size disagrees with the match plan");
  }
  ModelWeights<Scalar> out = source_weights;
  out.token_embeddings = apply_plan(plan, source_weights.token_embeddings);
  out.config.vocab_size = static_cast<int>(plan.cases.size());
  out.mlm_bias = Mat<Scalar>::Zero(1, out.config.vocab_size);
  out.config.validate();
  return out;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_TRANSPLANT_HPP
