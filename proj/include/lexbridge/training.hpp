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

#ifndef LEXBRIDGE_TRAINING_HPP
#define LEXBRIDGE_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexbridge/common.hpp"
#include "lexbridge/corpus.hpp"
#include "lexbridge/model.hpp"
#include "lexbridge/tokenizer.hpp"

namespace lexbridge {

struct MlmTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 5e-4;
  double mask_rate = 0.15;
  double mask_frac = 0.8;    // selected token -> [MASK]
  double keep_frac = 0.1;    // selected token -> unchanged
  double random_frac = 0.1;  // selected token -> random non-special token
  double warmup_frac = 0.1;  // linear warmup over this fraction of steps
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in [0, 1)");
    const double total = mask_frac + keep_frac + random_frac;
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("mask/keep/random fractions must sum to 1");
    }
    if (mask_frac < 0.0 || keep_frac < 0.0 || random_frac < 0.0) {
      throw ConfigError("mask/keep/random fractions must be non-negative");
    }
    if (!(warmup_frac >= 0.0 && warmup_frac <= 1.0)) {
      throw ConfigError("warmup_frac must lie in [0, 1]");
    }
  }

  /// Reported fine-tuning recipe: 150 epochs, batch 720, lr 5e-4.
  static MlmTrainConfig paper_preset() {
    MlmTrainConfig c;
    c.epochs = 150;
    c.batch_size = 720;
    c.learning_rate = 5e-4;
    return c;
  }

  /// From-scratch variant; larger batches destabilize training there, so the
  /// batch drops to 240.
  static MlmTrainConfig paper_from_scratch_preset() {
    MlmTrainConfig c = paper_preset();
    c.batch_size = 240;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const MlmTrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},           {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate}, {"mask_rate", c.mask_rate},
                     {"mask_frac", c.mask_frac},     {"keep_frac", c.keep_frac},
                     {"random_frac", c.random_frac}, {"warmup_frac", c.warmup_frac},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, MlmTrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.mask_frac = j.value("mask_frac", c.mask_frac);
  c.keep_frac = j.value("keep_frac", c.keep_frac);
  c.random_frac = j.value("random_frac", c.random_frac);
  c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
  c.seed = j.value("seed", c.seed);
}

/// Dynamic masking over the word-span positions of one sequence. Each
/// covered position is selected independently with probability mask_rate; a
/// draw with zero selections is redrawn once and then forced to select one
/// position. Selected tokens become [MASK] with probability mask_frac, stay
/// unchanged with keep_frac, or are replaced by a random non-special token
/// with random_frac. Labels record the original id at each selected
/// position.
inline MlmExample sample_masking(std::span<const std::uint32_t> token_ids,
                                 std::span<const WordSpan> word_spans,
                                 const MlmTrainConfig& config, Rng& rng,
                                 std::size_t vocab_size) {
  if (token_ids.empty()) throw DataError("cannot mask an empty sequence");
  if (vocab_size <= kNumSpecialTokens) throw ConfigError("vocabulary has no maskable tokens");

  std::vector<std::size_t> maskable;
  for (const auto& span : word_spans) {
    for (std::size_t i = 0; i < span.count; ++i) {
      const std::size_t pos = span.start + i;
      if (pos >= token_ids.size()) throw DataError("word span exceeds sequence length");
      maskable.push_back(pos);
    }
  }
  if (maskable.empty()) throw DataError("sequence has no maskable positions");

  MlmExample example;
  example.ids.assign(token_ids.begin(), token_ids.end());
  example.mask.assign(token_ids.size(), 1);

  std::vector<std::size_t> selected;
  for (int attempt = 0; attempt < 2 && selected.empty(); ++attempt) {
    for (const auto pos : maskable) {
      if (rng.uniform() < config.mask_rate) selected.push_back(pos);
    }
  }
  if (selected.empty()) selected.push_back(maskable[rng.below(maskable.size())]);

  for (const auto pos : selected) {
    const std::uint32_t original = example.ids[pos];
    const double u = rng.uniform();
    if (u < config.mask_frac) {
      example.ids[pos] = kMaskId;
    } else if (u < config.mask_frac + config.keep_frac) {
      // keep the original token
    } else {
      example.ids[pos] = static_cast<std::uint32_t>(
          kNumSpecialTokens + rng.below(vocab_size - kNumSpecialTokens));
    }
    example.labels.emplace_back(pos, original);
  }
  return example;
}

/// A training sequence: [CLS] chunk [SEP] with a single span covering the
/// chunk's word tokens.
struct TrainSequence {
  std::vector<std::uint32_t> ids;
  std::vector<WordSpan> spans;
};

/// Encodes documents and chunks their token streams into model-sized
/// sequences wrapped in [CLS]/[SEP].
inline std::vector<TrainSequence> build_train_sequences(std::span<const Document> docs,
                                                        const Vocabulary& vocab,
                                                        int max_seq_len) {
  if (max_seq_len < 3) throw ConfigError("max_seq_len must allow [CLS] + token + [SEP]");
  const std::size_t chunk_len = static_cast<std::size_t>(max_seq_len) - 2;
  std::vector<TrainSequence> sequences;
  for (const auto& doc : docs) {
    const Tokenization tok = encode(vocab, doc.text);
    for (std::size_t begin = 0; begin < tok.token_ids.size(); begin += chunk_len) {
      const std::size_t end = std::min(tok.token_ids.size(), begin + chunk_len);
      TrainSequence seq;
      seq.ids.push_back(kClsId);
      seq.ids.insert(seq.ids.end(), tok.token_ids.begin() + begin, tok.token_ids.begin() + end);
      seq.ids.push_back(kSepId);
      seq.spans.push_back({1, end - begin});
      sequences.push_back(std::move(seq));
    }
  }
  return sequences;
}

struct TrainStats {
  std::vector<double> epoch_mean_loss;
  /// (step, epoch, loss) rows, one per optimizer step.
  std::vector<std::tuple<long, int, double>> step_trace;
};

namespace detail {

/// Adam with per-tensor moment estimates, in tensor_ptrs order.
template <typename Scalar>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const EncoderConfig& config)
      : m_(ModelWeights<Scalar>::zeros(config)), v_(ModelWeights<Scalar>::zeros(config)) {}

  void step(ModelWeights<Scalar>& weights, const ModelWeights<Scalar>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    auto w_list = weights.tensor_ptrs();
    auto g_list = const_cast<ModelWeights<Scalar>&>(grads).tensor_ptrs();
    auto m_list = m_.tensor_ptrs();
    auto v_list = v_.tensor_ptrs();
    for (std::size_t i = 0; i < w_list.size(); ++i) {
      auto& w = *w_list[i].second;
      const auto& g = *g_list[i].second;
      auto& m = *m_list[i].second;
      auto& v = *v_list[i].second;
      m = (m.array() * Scalar(kBeta1) + g.array() * Scalar(1.0 - kBeta1)).matrix();
      v = (v.array() * Scalar(kBeta2) + g.array().square() * Scalar(1.0 - kBeta2)).matrix();
      w.array() -= Scalar(lr) * (m.array() / Scalar(bc1)) /
                   ((v.array() / Scalar(bc2)).sqrt() + Scalar(kEps));
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  ModelWeights<Scalar> m_, v_;
  long t_ = 0;
};

inline double warmup_lr(double base_lr, long step, long total_steps, double warmup_frac) {
  const long warmup_steps =
      std::max<long>(1, static_cast<long>(std::ceil(warmup_frac * static_cast<double>(total_steps))));
  if (step + 1 >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

}  // namespace detail

/// MLM pre-training: dynamic masking per epoch, Adam with linear warmup then
/// a constant rate. Deterministic for fixed (config, seed, corpus) when the
/// encoder's dropout is zero. Non-finite loss aborts.
template <typename Scalar>
TrainStats mlm_train(ModelWeights<Scalar>& weights, std::span<const Document> docs,
                     const Vocabulary& vocab, const MlmTrainConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(weights.config.vocab_size) != vocab.size()) {
    throw DataError("model vocab_size disagrees with the vocabulary");
  }
  const auto sequences = build_train_sequences(docs, vocab, weights.config.max_seq_len);
  if (sequences.empty()) throw DataError("no training sequences (empty corpus?)");

  Rng master(config.seed);
  Rng shuffle_rng = master.fork();
  Rng mask_rng = master.fork();
  Rng dropout_rng = master.fork();

  const long batches_per_epoch =
      static_cast<long>((sequences.size() + config.batch_size - 1) / config.batch_size);
  const long total_steps = batches_per_epoch * config.epochs;

  detail::AdamOptimizer<Scalar> optimizer(weights.config);
  TrainStats stats;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    long epoch_batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      MlmBatch batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& seq = sequences[order[i]];
        batch.push_back(sample_masking(seq.ids, seq.spans, config, mask_rng, vocab.size()));
      }
      auto [loss, grads] =
          loss_and_grads(weights, batch, weights.config.dropout, &dropout_rng);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step));
      }
      optimizer.step(weights, grads,
                     detail::warmup_lr(config.learning_rate, step, total_steps,
                                       config.warmup_frac));
      if (!weights.all_finite()) {
        throw NumericError("non-finite weights after step " + std::to_string(step));
      }
      stats.step_trace.emplace_back(step, epoch, loss);
      epoch_loss += loss;
      ++epoch_batches;
      ++step;
    }
    stats.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
  }
  return stats;
}

/// Mean masked loss over the whole corpus with a fixed masking seed and no
/// updates. Useful for comparing initializations.
template <typename Scalar>
double mlm_eval_loss(const ModelWeights<Scalar>& weights, std::span<const Document> docs,
                     const Vocabulary& vocab, const MlmTrainConfig& config,
                     std::uint64_t mask_seed) {
  const auto sequences = build_train_sequences(docs, vocab, weights.config.max_seq_len);
  if (sequences.empty()) throw DataError("no sequences to evaluate");
  Rng mask_rng(mask_seed);
  double loss_sum = 0.0;
  std::size_t label_total = 0;
  for (const auto& seq : sequences) {
    MlmBatch batch{sample_masking(seq.ids, seq.spans, config, mask_rng, vocab.size())};
    const std::size_t n = batch.front().labels.size();
    loss_sum += mlm_loss(weights, batch) * static_cast<double>(n);
    label_total += n;
  }
  return loss_sum / static_cast<double>(label_total);
}

// ---------------------------------------------------------------------------
// Dual-encoder (DPR-style) fine-tuning
// ---------------------------------------------------------------------------

struct DprTrainConfig {
  int steps = 200;
  int batch_size = 8;
  double learning_rate = 2e-5;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (batch_size < 2) throw ConfigError("in-batch negatives need batch_size >= 2");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const DprTrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DprTrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
}

struct DprPair {
  std::string question;
  std::string passage;
};

/// In-batch-negative cross-entropy: scores(i, j) = q_i . p_j, gold on the
/// diagonal, mean over queries.
template <typename Scalar>
double dpr_inbatch_loss(const Mat<Scalar>& queries, const Mat<Scalar>& passages,
                        Mat<Scalar>* dq = nullptr, Mat<Scalar>* dp = nullptr) {
  if (queries.rows() != passages.rows() || queries.cols() != passages.cols()) {
    throw DataError("query/passage embedding shapes disagree");
  }
  if (queries.rows() < 2) throw DataError("in-batch negatives need at least 2 pairs");
  const Eigen::Index n = queries.rows();
  Mat<Scalar> scores = queries * passages.transpose();
  double loss = 0.0;
  Mat<Scalar> probs = scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mx = scores.row(i).maxCoeff();
    probs.row(i) = (scores.row(i).array() - mx).exp().matrix();
    const double denom = static_cast<double>(probs.row(i).sum());
    loss -= static_cast<double>(scores(i, i)) - static_cast<double>(mx) - std::log(denom);
    probs.row(i) /= static_cast<Scalar>(denom);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("non-finite DPR loss");
  if (dq != nullptr && dp != nullptr) {
    Mat<Scalar> dscores = probs;
    for (Eigen::Index i = 0; i < n; ++i) dscores(i, i) -= Scalar(1);
    dscores /= static_cast<Scalar>(n);
    dq->noalias() = dscores * passages;
    dp->noalias() = dscores.transpose() * queries;
  }
  return loss;
}

namespace detail {

template <typename Scalar>
std::vector<std::uint32_t> dpr_sequence(const Vocabulary& vocab, std::string_view text,
                                        int max_seq_len) {
  const Tokenization tok = encode(vocab, text);
  const std::size_t budget = static_cast<std::size_t>(max_seq_len) - 2;
  std::vector<std::uint32_t> ids;
  ids.push_back(kClsId);
  const std::size_t n = std::min(budget, tok.token_ids.size());
  ids.insert(ids.end(), tok.token_ids.begin(), tok.token_ids.begin() + n);
  ids.push_back(kSepId);
  return ids;
}

}  // namespace detail

struct DprStats {
  std::vector<double> step_loss;
};

/// Fine-tunes query and passage encoders with in-batch negatives under
/// dot-product similarity and CLS pooling. Both encoders are updated; zero
/// steps leaves them untouched.
template <typename Scalar>
DprStats dpr_train(ModelWeights<Scalar>& query_encoder, ModelWeights<Scalar>& passage_encoder,
                   std::span<const DprPair> pairs, const Vocabulary& vocab,
                   const DprTrainConfig& config) {
  config.validate();
  if (pairs.size() < 2) throw DataError("dpr_train needs at least 2 pairs");

  struct EncodedPair {
    std::vector<std::uint32_t> q_ids, p_ids;
    std::vector<std::uint8_t> q_mask, p_mask;
  };
  std::vector<EncodedPair> encoded;
  encoded.reserve(pairs.size());
  for (const auto& pair : pairs) {
    EncodedPair e;
    e.q_ids = detail::dpr_sequence<Scalar>(vocab, pair.question, query_encoder.config.max_seq_len);
    e.p_ids =
        detail::dpr_sequence<Scalar>(vocab, pair.passage, passage_encoder.config.max_seq_len);
    e.q_mask.assign(e.q_ids.size(), 1);
    e.p_mask.assign(e.p_ids.size(), 1);
    encoded.push_back(std::move(e));
  }

  Rng rng(config.seed);
  detail::AdamOptimizer<Scalar> q_opt(query_encoder.config);
  detail::AdamOptimizer<Scalar> p_opt(passage_encoder.config);
  const int d = query_encoder.config.d_model;
  if (passage_encoder.config.d_model != d) {
    throw DataError("query and passage encoders must share d_model");
  }

  DprStats stats;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  for (int step = 0; step < config.steps; ++step) {
    const std::size_t batch_size =
        std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), encoded.size());
    std::vector<std::size_t> batch_idx;
    batch_idx.reserve(batch_size);
    while (batch_idx.size() < batch_size) {
      if (cursor >= order.size()) {
        order.resize(encoded.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        cursor = 0;
      }
      batch_idx.push_back(order[cursor++]);
    }

    Mat<Scalar> queries(batch_size, d), passages(batch_size, d);
    std::vector<detail::ForwardCache<Scalar>> q_caches(batch_size), p_caches(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto& e = encoded[batch_idx[i]];
      queries.row(static_cast<Eigen::Index>(i)) =
          encoder_forward(query_encoder, e.q_ids, e.q_mask, &q_caches[i]).row(0);
      passages.row(static_cast<Eigen::Index>(i)) =
          encoder_forward(passage_encoder, e.p_ids, e.p_mask, &p_caches[i]).row(0);
    }

    Mat<Scalar> dq(batch_size, d), dp(batch_size, d);
    const double loss = dpr_inbatch_loss(queries, passages, &dq, &dp);
    stats.step_loss.push_back(loss);

    auto q_grads = ModelWeights<Scalar>::zeros(query_encoder.config);
    auto p_grads = ModelWeights<Scalar>::zeros(passage_encoder.config);
    for (std::size_t i = 0; i < batch_size; ++i) {
      Mat<Scalar> dh_q = Mat<Scalar>::Zero(
          static_cast<Eigen::Index>(encoded[batch_idx[i]].q_ids.size()), d);
      dh_q.row(0) = dq.row(static_cast<Eigen::Index>(i));
      encoder_backward(query_encoder, q_caches[i], dh_q, q_grads);

      Mat<Scalar> dh_p = Mat<Scalar>::Zero(
          static_cast<Eigen::Index>(encoded[batch_idx[i]].p_ids.size()), d);
      dh_p.row(0) = dp.row(static_cast<Eigen::Index>(i));
      encoder_backward(passage_encoder, p_caches[i], dh_p, p_grads);
    }
    q_opt.step(query_encoder, q_grads, config.learning_rate);
    p_opt.step(passage_encoder, p_grads, config.learning_rate);
    if (!query_encoder.all_finite() || !passage_encoder.all_finite()) {
      throw NumericError("non-finite encoder weights at DPR step " + std::to_string(step));
    }
  }
  return stats;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_TRAINING_HPP
