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

#ifndef LEXBRIDGE_EVAL_HPP
#define LEXBRIDGE_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexbridge/common.hpp"
#include "lexbridge/corpus.hpp"
#include "lexbridge/model.hpp"
#include "lexbridge/tokenizer.hpp"

namespace lexbridge {

/// One whole-word prediction task: a full input sequence whose target span
/// is masked, plus the gold token ids of the hidden word.
struct MaskedWordTask {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> mask;
  std::size_t span_start = 0;
  std::size_t span_len = 0;
  std::vector<std::uint32_t> gold_ids;
  std::string gold_word;
};

/// Fills the masked span left to right: at each step the earliest
/// still-masked span position is predicted by argmax over the vocabulary
/// (ties to the lowest id), the prediction replaces the [MASK], and the
/// model is re-run. Returns the detokenized span.
template <typename Scalar>
std::string predict_word(const ModelWeights<Scalar>& weights, const Vocabulary& vocab,
                         const MaskedWordTask& task) {
  if (task.span_len == 0) throw DataError("masked word span is empty");
  if (task.span_start + task.span_len > task.ids.size()) {
    throw DataError("masked word span exceeds the sequence");
  }
  if (task.ids.size() > static_cast<std::size_t>(weights.config.max_seq_len)) {
    throw DataError("task sequence exceeds max_seq_len");
  }
  std::vector<std::uint32_t> ids = task.ids;
  for (std::size_t i = 0; i < task.span_len; ++i) ids[task.span_start + i] = kMaskId;

  for (std::size_t step = 0; step < task.span_len; ++step) {
    const std::size_t pos = task.span_start + step;
    const Mat<Scalar> logits = forward_mlm(weights, ids, task.mask);
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(pos)).maxCoeff(&best);
    ids[pos] = static_cast<std::uint32_t>(best);
  }

  const std::span<const std::uint32_t> span_ids(ids.data() + task.span_start, task.span_len);
  return decode(vocab, span_ids);
}

struct PerItemRecord {
  std::string id;
  double value = 0.0;  // 1/0 for word tasks, per-query metric for retrieval
  long rank = -1;      // rank of the first gold passage, if applicable
  std::string predicted;
  std::string gold;
};

struct EvalResult {
  std::string metric;
  double value = 0.0;
  std::vector<PerItemRecord> items;

  nlohmann::json to_json() const {
    return nlohmann::json{{"metric", metric}, {"value", value}, {"n_items", items.size()}};
  }

  void save_items_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write per-item CSV: " + path.string());
    out << "id,value,rank,predicted,gold\n";
    for (const auto& item : items) {
      const auto escape = [](const std::string& s) {
        std::string r = "\"";
        for (const char c : s) {
          if (c == '"') r += "\"\"";
          else r += c;
        }
        r += "\"";
        return r;
      };
      out << escape(item.id) << ',' << item.value << ',' << item.rank << ','
          << escape(item.predicted) << ',' << escape(item.gold) << '\n';
    }
  }
};

namespace detail {

/// Builds one task per word occurrence. Long documents get a window of
/// surrounding tokens so the span plus [CLS]/[SEP] fits max_seq_len.
template <typename Scalar>
std::vector<MaskedWordTask> build_word_tasks(const ModelWeights<Scalar>& weights,
                                             const Vocabulary& vocab, const Document& doc) {
  const Tokenization tok = encode(vocab, doc.text);
  const std::size_t budget = static_cast<std::size_t>(weights.config.max_seq_len) - 2;
  std::vector<MaskedWordTask> tasks;
  for (const auto& span : tok.word_spans) {
    if (span.count > budget) {
      throw DataError("word span longer than max_seq_len in document " + doc.id);
    }
    std::size_t window_begin = 0;
    std::size_t window_len = tok.token_ids.size();
    if (tok.token_ids.size() > budget) {
      const std::size_t center = span.start + span.count / 2;
      window_begin = center > budget / 2 ? center - budget / 2 : 0;
      window_begin = std::min(window_begin, tok.token_ids.size() - budget);
      // Keep the whole span inside the window.
      window_begin = std::min(window_begin, span.start);
      window_begin = std::max(window_begin,
                              span.start + span.count > budget
                                  ? span.start + span.count - budget
                                  : static_cast<std::size_t>(0));
      window_len = budget;
    }
    MaskedWordTask task;
    task.ids.push_back(kClsId);
    task.ids.insert(task.ids.end(), tok.token_ids.begin() + window_begin,
                    tok.token_ids.begin() + window_begin + window_len);
    task.ids.push_back(kSepId);
    task.mask.assign(task.ids.size(), 1);
    task.span_start = span.start - window_begin + 1;  // +1 for [CLS]
    task.span_len = span.count;
    task.gold_ids.assign(tok.token_ids.begin() + span.start,
                         tok.token_ids.begin() + span.start + span.count);
    task.gold_word = decode(vocab, task.gold_ids);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace detail

/// Whole-word masked prediction over every word occurrence in every
/// document; a word counts as correct iff the predicted string equals the
/// gold word exactly (case-sensitive).
template <typename Scalar>
EvalResult masked_word_accuracy(const ModelWeights<Scalar>& weights,
                                std::span<const Document> docs, const Vocabulary& vocab) {
  struct TaskRef {
    std::string item_id;
    MaskedWordTask task;
  };
  std::vector<TaskRef> tasks;
  for (const auto& doc : docs) {
    auto doc_tasks = detail::build_word_tasks(weights, vocab, doc);
    for (std::size_t w = 0; w < doc_tasks.size(); ++w) {
      tasks.push_back({doc.id + ":" + std::to_string(w), std::move(doc_tasks[w])});
    }
  }
  if (tasks.empty()) throw DataError("validation set has no words to predict");

  EvalResult result;
  result.metric = "masked_word_accuracy";
  result.items.resize(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const auto& ref = tasks[i];
    PerItemRecord record;
    record.id = ref.item_id;
    record.predicted = predict_word(weights, vocab, ref.task);
    record.gold = ref.task.gold_word;
    record.value = record.predicted == record.gold ? 1.0 : 0.0;
    result.items[i] = std::move(record);
  });
  double correct = 0.0;
  for (const auto& item : result.items) correct += item.value;
  result.value = correct / static_cast<double>(result.items.size());
  return result;
}

/// Fraction of queries with at least one gold passage in the top k.
inline double accuracy_at_k(std::span<const std::vector<std::uint32_t>> rankings,
                            std::span<const std::vector<std::uint32_t>> gold_sets, int k) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (rankings.size() != gold_sets.size()) {
    throw DataError("rankings and gold sets differ in length");
  }
  if (rankings.empty()) throw DataError("empty query set");
  double hits = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const std::unordered_set<std::uint32_t> gold(gold_sets[q].begin(), gold_sets[q].end());
    const std::size_t limit = std::min<std::size_t>(rankings[q].size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
      if (gold.count(rankings[q][i]) > 0) {
        hits += 1.0;
        break;
      }
    }
  }
  return hits / static_cast<double>(rankings.size());
}

/// NDCG@k with binary relevance and a log2(i+1) discount. The ideal DCG uses
/// the query's gold count capped at k; queries without gold passages are
/// excluded from the mean.
inline double ndcg_at_k(std::span<const std::vector<std::uint32_t>> rankings,
                        std::span<const std::vector<std::uint32_t>> gold_sets, int k) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (rankings.size() != gold_sets.size()) {
    throw DataError("rankings and gold sets differ in length");
  }
  if (rankings.empty()) throw DataError("empty query set");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (gold_sets[q].empty()) continue;
    const std::unordered_set<std::uint32_t> gold(gold_sets[q].begin(), gold_sets[q].end());
    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(rankings[q].size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
      if (gold.count(rankings[q][i]) > 0) {
        dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      }
    }
    const std::size_t ideal_n = std::min<std::size_t>(gold.size(), static_cast<std::size_t>(k));
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal_n; ++i) {
      idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    total += dcg / idcg;
    ++counted;
  }
  if (counted == 0) throw DataError("every query has an empty gold set");
  return total / static_cast<double>(counted);
}

/// Passage embeddings, one row per passage id.
struct RetrievalIndex {
  std::vector<std::uint32_t> passage_ids;
  io::MatrixF embeddings;

  void validate() const {
    if (static_cast<std::size_t>(embeddings.rows()) != passage_ids.size()) {
      throw DataError("index row count disagrees with passage id count");
    }
    if (!embeddings.allFinite()) throw NumericError("non-finite passage embeddings");
  }
};

/// Top-k passage ids by descending dot product; ties break on ascending
/// passage id.
inline std::vector<std::uint32_t> retrieve_topk(const io::MatrixF& query,
                                                const RetrievalIndex& index, int k) {
  index.validate();
  if (query.rows() != 1 || query.cols() != index.embeddings.cols()) {
    throw DataError("query embedding dimension disagrees with the index");
  }
  if (k < 1 || static_cast<std::size_t>(k) > index.passage_ids.size()) {
    throw ConfigError("k must lie in [1, passage count]");
  }
  const Eigen::VectorXf scores = index.embeddings * query.row(0).transpose();
  std::vector<std::size_t> rows(index.passage_ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    const float sa = scores(static_cast<Eigen::Index>(a));
    const float sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return index.passage_ids[a] < index.passage_ids[b];
  });
  std::vector<std::uint32_t> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = index.passage_ids[rows[static_cast<std::size_t>(i)]];
  return out;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_EVAL_HPP
