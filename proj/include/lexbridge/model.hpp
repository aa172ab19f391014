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

#ifndef LEXBRIDGE_MODEL_HPP
#define LEXBRIDGE_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lexbridge/common.hpp"
#include "lexbridge/io.hpp"
#include "lexbridge/tokenizer.hpp"

namespace lexbridge {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// BERT-style encoder topology. Defaults are desk-scale; paper-scale values
/// (12 layers, 12 heads, d_model 768) are expressible but slow on CPU.
struct EncoderConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_seq_len = 128;
  int vocab_size = 0;
  double dropout = 0.1;

  void validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_seq_len < 1) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (vocab_size < static_cast<int>(kNumSpecialTokens)) {
      throw ConfigError("vocab_size must cover the special tokens");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  bool operator==(const EncoderConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},       {"n_heads", c.n_heads},
                     {"d_model", c.d_model},         {"d_ff", c.d_ff},
                     {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
                     {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("d_model").get_to(c.d_model);
  j.at("d_ff").get_to(c.d_ff);
  j.at("max_seq_len").get_to(c.max_seq_len);
  j.at("vocab_size").get_to(c.vocab_size);
  c.dropout = j.value("dropout", 0.0);
}

template <typename Scalar>
struct LayerWeights {
  Mat<Scalar> wq, wk, wv, wo;          // d_model x d_model
  Mat<Scalar> bq, bk, bv, bo;          // 1 x d_model
  Mat<Scalar> ln1_gamma, ln1_beta;     // 1 x d_model
  Mat<Scalar> w1;                      // d_model x d_ff
  Mat<Scalar> b1;                      // 1 x d_ff
  Mat<Scalar> w2;                      // d_ff x d_model
  Mat<Scalar> b2;                      // 1 x d_model
  Mat<Scalar> ln2_gamma, ln2_beta;     // 1 x d_model
};

/// Full encoder parameter set. The MLM output projection is the token
/// embedding matrix itself (tied storage): logits = H * token_embeddings^T
/// + mlm_bias. Writers of the weights need exclusive access; forward and
/// gradient computation only read them and may run concurrently.
template <typename Scalar>
struct ModelWeights {
  EncoderConfig config;
  Mat<Scalar> token_embeddings;       // vocab_size x d_model (also the MLM head)
  Mat<Scalar> positional_embeddings;  // max_seq_len x d_model
  Mat<Scalar> emb_ln_gamma, emb_ln_beta;  // 1 x d_model
  std::vector<LayerWeights<Scalar>> layers;
  Mat<Scalar> mlm_bias;               // 1 x vocab_size

  static ModelWeights zeros(const EncoderConfig& config) {
    config.validate();
    ModelWeights w;
    w.config = config;
    const int d = config.d_model;
    w.token_embeddings = Mat<Scalar>::Zero(config.vocab_size, d);
    w.positional_embeddings = Mat<Scalar>::Zero(config.max_seq_len, d);
    w.emb_ln_gamma = Mat<Scalar>::Zero(1, d);
    w.emb_ln_beta = Mat<Scalar>::Zero(1, d);
    w.layers.resize(config.n_layers);
    for (auto& layer : w.layers) {
      layer.wq = Mat<Scalar>::Zero(d, d);
      layer.wk = Mat<Scalar>::Zero(d, d);
      layer.wv = Mat<Scalar>::Zero(d, d);
      layer.wo = Mat<Scalar>::Zero(d, d);
      layer.bq = Mat<Scalar>::Zero(1, d);
      layer.bk = Mat<Scalar>::Zero(1, d);
      layer.bv = Mat<Scalar>::Zero(1, d);
      layer.bo = Mat<Scalar>::Zero(1, d);
      layer.ln1_gamma = Mat<Scalar>::Zero(1, d);
      layer.ln1_beta = Mat<Scalar>::Zero(1, d);
      layer.w1 = Mat<Scalar>::Zero(d, config.d_ff);
      layer.b1 = Mat<Scalar>::Zero(1, config.d_ff);
      layer.w2 = Mat<Scalar>::Zero(config.d_ff, d);
      layer.b2 = Mat<Scalar>::Zero(1, d);
      layer.ln2_gamma = Mat<Scalar>::Zero(1, d);
      layer.ln2_beta = Mat<Scalar>::Zero(1, d);
    }
    w.mlm_bias = Mat<Scalar>::Zero(1, config.vocab_size);
    return w;
  }

  /// Fixed-order listing of every parameter tensor; the one place that
  /// enumerates them. Optimizers, serialization, and gradient checks all
  /// iterate through this.
  std::vector<std::pair<std::string, Mat<Scalar>*>> tensor_ptrs() {
    std::vector<std::pair<std::string, Mat<Scalar>*>> out;
    out.emplace_back("token_embeddings", &token_embeddings);
    out.emplace_back("positional_embeddings", &positional_embeddings);
    out.emplace_back("emb_ln_gamma", &emb_ln_gamma);
    out.emplace_back("emb_ln_beta", &emb_ln_beta);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "layers." + std::to_string(i) + ".";
      auto& l = layers[i];
      out.emplace_back(p + "wq", &l.wq);
      out.emplace_back(p + "bq", &l.bq);
      out.emplace_back(p + "wk", &l.wk);
      out.emplace_back(p + "bk", &l.bk);
      out.emplace_back(p + "wv", &l.wv);
      out.emplace_back(p + "bv", &l.bv);
      out.emplace_back(p + "wo", &l.wo);
      out.emplace_back(p + "bo", &l.bo);
      out.emplace_back(p + "ln1_gamma", &l.ln1_gamma);
      out.emplace_back(p + "ln1_beta", &l.ln1_beta);
      out.emplace_back(p + "w1", &l.w1);
      out.emplace_back(p + "b1", &l.b1);
      out.emplace_back(p + "w2", &l.w2);
      out.emplace_back(p + "b2", &l.b2);
      out.emplace_back(p + "ln2_gamma", &l.ln2_gamma);
      out.emplace_back(p + "ln2_beta", &l.ln2_beta);
    }
    out.emplace_back("mlm_bias", &mlm_bias);
    return out;
  }

  std::vector<std::pair<std::string, const Mat<Scalar>*>> tensor_ptrs() const {
    auto mutable_list = const_cast<ModelWeights*>(this)->tensor_ptrs();
    std::vector<std::pair<std::string, const Mat<Scalar>*>> out;
    out.reserve(mutable_list.size());
    for (auto& [name, ptr] : mutable_list) out.emplace_back(name, ptr);
    return out;
  }

  bool all_finite() const {
    for (const auto& [name, m] : tensor_ptrs()) {
      if (!m->allFinite()) return false;
    }
    return true;
  }
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-12;

namespace detail {

template <typename Scalar>
void fill_normal(Mat<Scalar>& m, double stddev, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<Scalar>(stddev * rng.normal());
    }
  }
}

}  // namespace detail

/// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
/// Deterministic for a fixed seed.
template <typename Scalar = float>
ModelWeights<Scalar> init_random(const EncoderConfig& config, std::uint64_t seed) {
  auto w = ModelWeights<Scalar>::zeros(config);
  Rng rng(seed);
  detail::fill_normal(w.token_embeddings, kInitStd, rng);
  detail::fill_normal(w.positional_embeddings, kInitStd, rng);
  w.emb_ln_gamma.setOnes();
  for (auto& layer : w.layers) {
    detail::fill_normal(layer.wq, kInitStd, rng);
    detail::fill_normal(layer.wk, kInitStd, rng);
    detail::fill_normal(layer.wv, kInitStd, rng);
    detail::fill_normal(layer.wo, kInitStd, rng);
    detail::fill_normal(layer.w1, kInitStd, rng);
    detail::fill_normal(layer.w2, kInitStd, rng);
    layer.ln1_gamma.setOnes();
    layer.ln2_gamma.setOnes();
  }
  return w;
}

namespace detail {

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> xhat;       // normalized input
  ColVec<Scalar> rstd;    // 1/sqrt(var + eps) per row
};

template <typename Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gamma, const Mat<Scalar>& beta,
                       LayerNormCache<Scalar>* cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Mat<Scalar> xhat(rows, cols);
  ColVec<Scalar> rstd(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().mean();
    const Scalar rs = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
    xhat.row(r) = ((x.row(r).array() - mean) * rs).matrix();
    rstd(r) = rs;
  }
  Mat<Scalar> y(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    y.row(r) = xhat.row(r).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

/// Returns dX; accumulates dGamma/dBeta.
template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const LayerNormCache<Scalar>& cache,
                                const Mat<Scalar>& gamma, Mat<Scalar>& dgamma,
                                Mat<Scalar>& dbeta) {
  const Eigen::Index rows = dy.rows(), cols = dy.cols();
  Mat<Scalar> dx(rows, cols);
  Mat<Scalar> dxhat(1, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dbeta.row(0) += dy.row(r);
    dgamma.row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
    dxhat.row(0) = dy.row(r).cwiseProduct(gamma.row(0));
    const Scalar mean_dxhat = dxhat.row(0).mean();
    const Scalar mean_dxhat_xhat = dxhat.row(0).cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = (cache.rstd(r) * (dxhat.row(0).array() - mean_dxhat -
                                  cache.xhat.row(r).array() * mean_dxhat_xhat))
                    .matrix();
  }
  return dx;
}

template <typename Scalar>
void softmax_rows_inplace(Mat<Scalar>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

template <typename Scalar>
Scalar gelu(Scalar z) {
  return Scalar(0.5) * z * (Scalar(1) + std::erf(z * Scalar(M_SQRT1_2)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar z) {
  const Scalar phi = std::exp(Scalar(-0.5) * z * z) *
                     static_cast<Scalar>(0.3989422804014327);  // 1/sqrt(2*pi)
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(z * Scalar(M_SQRT1_2)));
  return cdf + z * phi;
}

/// Inverted-dropout mask: entries are 0 or 1/(1-rate).
template <typename Scalar>
Mat<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<Scalar> mask(rows, cols);
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      mask(r, c) = rng.uniform() >= rate ? keep_scale : Scalar(0);
    }
  }
  return mask;
}

template <typename Scalar>
struct LayerCache {
  Mat<Scalar> h_in;               // layer input
  Mat<Scalar> q, k, v;            // projections
  std::vector<Mat<Scalar>> attn;  // per-head softmax probabilities
  Mat<Scalar> ctx;                // concatenated head contexts
  Mat<Scalar> attn_drop;          // dropout mask after output projection (may be empty)
  LayerNormCache<Scalar> ln1;
  Mat<Scalar> h1;                 // LN1 output
  Mat<Scalar> z;                  // pre-GELU activations
  Mat<Scalar> f;                  // GELU(z)
  Mat<Scalar> ffn_drop;
  LayerNormCache<Scalar> ln2;
};

template <typename Scalar>
struct ForwardCache {
  std::vector<std::uint32_t> ids;
  Mat<Scalar> emb_drop;
  LayerNormCache<Scalar> ln_emb;
  std::vector<LayerCache<Scalar>> layers;
  Mat<Scalar> h_final;
};

}  // namespace detail

namespace detail {

inline void check_inputs(const EncoderConfig& config, std::span<const std::uint32_t> ids,
                         std::span<const std::uint8_t> attention_mask) {
  if (ids.empty()) throw DataError("input sequence is empty");
  if (ids.size() > static_cast<std::size_t>(config.max_seq_len)) {
    throw DataError("sequence length " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                    std::to_string(config.max_seq_len));
  }
  if (attention_mask.size() != ids.size()) {
    throw DataError("attention mask length disagrees with sequence length");
  }
  for (const auto id : ids) {
    if (id >= static_cast<std::uint32_t>(config.vocab_size)) {
      throw DataError("token id " + std::to_string(id) + " out of vocabulary range");
    }
  }
}

}  // namespace detail

/// Encoder forward pass over one sequence. Positions whose attention_mask is
/// zero cannot be attended to by any position. If cache is non-null it is
/// filled for a subsequent backward pass; dropout is applied only when
/// dropout_rate > 0 and dropout_rng is non-null.
template <typename Scalar>
Mat<Scalar> encoder_forward(const ModelWeights<Scalar>& weights, std::span<const std::uint32_t> ids,
                            std::span<const std::uint8_t> attention_mask,
                            detail::ForwardCache<Scalar>* cache = nullptr,
                            double dropout_rate = 0.0, Rng* dropout_rng = nullptr) {
  const auto& config = weights.config;
  detail::check_inputs(config, ids, attention_mask);
  const Eigen::Index seq_len = static_cast<Eigen::Index>(ids.size());
  const int d = config.d_model;
  const int n_heads = config.n_heads;
  const int dh = d / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const bool use_dropout = dropout_rate > 0.0 && dropout_rng != nullptr;

  Mat<Scalar> key_bias(1, seq_len);
  for (Eigen::Index j = 0; j < seq_len; ++j) {
    key_bias(0, j) = attention_mask[static_cast<std::size_t>(j)] != 0 ? Scalar(0) : Scalar(-1e9);
  }

  Mat<Scalar> x(seq_len, d);
  for (Eigen::Index t = 0; t < seq_len; ++t) {
    x.row(t) = weights.token_embeddings.row(ids[static_cast<std::size_t>(t)]) +
               weights.positional_embeddings.row(t);
  }

  if (cache != nullptr) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->layers.clear();
    cache->layers.reserve(config.n_layers);
  }

  detail::LayerNormCache<Scalar> ln_emb;
  Mat<Scalar> h = detail::layer_norm(x, weights.emb_ln_gamma, weights.emb_ln_beta,
                                     cache != nullptr ? &ln_emb : nullptr);
  if (use_dropout) {
    Mat<Scalar> mask = detail::dropout_mask<Scalar>(seq_len, d, dropout_rate, *dropout_rng);
    h = h.cwiseProduct(mask);
    if (cache != nullptr) cache->emb_drop = std::move(mask);
  }
  if (cache != nullptr) cache->ln_emb = std::move(ln_emb);

  for (int layer_idx = 0; layer_idx < config.n_layers; ++layer_idx) {
    const auto& layer = weights.layers[static_cast<std::size_t>(layer_idx)];
    detail::LayerCache<Scalar> lc;
    if (cache != nullptr) lc.h_in = h;

    Mat<Scalar> q = (h * layer.wq).rowwise() + layer.bq.row(0);
    Mat<Scalar> k = (h * layer.wk).rowwise() + layer.bk.row(0);
    Mat<Scalar> v = (h * layer.wv).rowwise() + layer.bv.row(0);

    Mat<Scalar> ctx(seq_len, d);
    std::vector<Mat<Scalar>> attn;
    if (cache != nullptr) attn.reserve(n_heads);
    for (int head = 0; head < n_heads; ++head) {
      const auto qh = q.middleCols(head * dh, dh);
      const auto kh = k.middleCols(head * dh, dh);
      const auto vh = v.middleCols(head * dh, dh);
      Mat<Scalar> scores = (qh * kh.transpose()) * scale;
      scores.rowwise() += key_bias.row(0);
      detail::softmax_rows_inplace(scores);
      ctx.middleCols(head * dh, dh) = scores * vh;
      if (cache != nullptr) attn.push_back(std::move(scores));
    }

    Mat<Scalar> attn_out = (ctx * layer.wo).rowwise() + layer.bo.row(0);
    if (use_dropout) {
      Mat<Scalar> mask = detail::dropout_mask<Scalar>(seq_len, d, dropout_rate, *dropout_rng);
      attn_out = attn_out.cwiseProduct(mask);
      if (cache != nullptr) lc.attn_drop = std::move(mask);
    }
    Mat<Scalar> s1 = h + attn_out;
    Mat<Scalar> h1 = detail::layer_norm(s1, layer.ln1_gamma, layer.ln1_beta,
                                        cache != nullptr ? &lc.ln1 : nullptr);

    Mat<Scalar> z = (h1 * layer.w1).rowwise() + layer.b1.row(0);
    Mat<Scalar> f = z.unaryExpr([](Scalar t) { return detail::gelu(t); });
    Mat<Scalar> ffn_out = (f * layer.w2).rowwise() + layer.b2.row(0);
    if (use_dropout) {
      Mat<Scalar> mask = detail::dropout_mask<Scalar>(seq_len, d, dropout_rate, *dropout_rng);
      ffn_out = ffn_out.cwiseProduct(mask);
      if (cache != nullptr) lc.ffn_drop = std::move(mask);
    }
    Mat<Scalar> s2 = h1 + ffn_out;
    Mat<Scalar> h2 = detail::layer_norm(s2, layer.ln2_gamma, layer.ln2_beta,
                                        cache != nullptr ? &lc.ln2 : nullptr);

    if (cache != nullptr) {
      lc.q = std::move(q);
      lc.k = std::move(k);
      lc.v = std::move(v);
      lc.attn = std::move(attn);
      lc.ctx = std::move(ctx);
      lc.h1 = std::move(h1);
      lc.z = std::move(z);
      lc.f = std::move(f);
      cache->layers.push_back(std::move(lc));
      h = std::move(h2);
    } else {
      h = std::move(h2);
    }
  }

  if (cache != nullptr) cache->h_final = h;
  return h;
}

/// Backpropagates d_hidden (gradient at the encoder output) through the
/// cached forward pass, accumulating parameter gradients into grads.
template <typename Scalar>
void encoder_backward(const ModelWeights<Scalar>& weights,
                      const detail::ForwardCache<Scalar>& cache, const Mat<Scalar>& d_hidden,
                      ModelWeights<Scalar>& grads) {
  const auto& config = weights.config;
  const Eigen::Index seq_len = d_hidden.rows();
  const int d = config.d_model;
  const int n_heads = config.n_heads;
  const int dh = d / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  Mat<Scalar> dh_cur = d_hidden;
  for (int layer_idx = config.n_layers - 1; layer_idx >= 0; --layer_idx) {
    const auto& layer = weights.layers[static_cast<std::size_t>(layer_idx)];
    const auto& lc = cache.layers[static_cast<std::size_t>(layer_idx)];
    auto& gl = grads.layers[static_cast<std::size_t>(layer_idx)];

    // LN2 and the feed-forward sublayer.
    Mat<Scalar> ds2 =
        detail::layer_norm_backward(dh_cur, lc.ln2, layer.ln2_gamma, gl.ln2_gamma, gl.ln2_beta);
    Mat<Scalar> dh1 = ds2;
    Mat<Scalar> dg = lc.ffn_drop.size() > 0 ? ds2.cwiseProduct(lc.ffn_drop) : ds2;
    gl.w2.noalias() += lc.f.transpose() * dg;
    gl.b2.row(0) += dg.colwise().sum();
    Mat<Scalar> df = dg * layer.w2.transpose();
    Mat<Scalar> dz =
        df.cwiseProduct(lc.z.unaryExpr([](Scalar t) { return detail::gelu_grad(t); }));
    gl.w1.noalias() += lc.h1.transpose() * dz;
    gl.b1.row(0) += dz.colwise().sum();
    dh1.noalias() += dz * layer.w1.transpose();

    // LN1 and the attention sublayer.
    Mat<Scalar> ds1 =
        detail::layer_norm_backward(dh1, lc.ln1, layer.ln1_gamma, gl.ln1_gamma, gl.ln1_beta);
    Mat<Scalar> dh_in = ds1;
    Mat<Scalar> dattn_out = lc.attn_drop.size() > 0 ? ds1.cwiseProduct(lc.attn_drop) : ds1;
    gl.wo.noalias() += lc.ctx.transpose() * dattn_out;
    gl.bo.row(0) += dattn_out.colwise().sum();
    Mat<Scalar> dctx = dattn_out * layer.wo.transpose();

    Mat<Scalar> dq(seq_len, d), dk(seq_len, d), dv(seq_len, d);
    for (int head = 0; head < n_heads; ++head) {
      const auto& a = lc.attn[static_cast<std::size_t>(head)];
      const auto dctx_h = dctx.middleCols(head * dh, dh);
      const auto kh = lc.k.middleCols(head * dh, dh);
      const auto qh = lc.q.middleCols(head * dh, dh);
      const auto vh = lc.v.middleCols(head * dh, dh);

      Mat<Scalar> da = dctx_h * vh.transpose();
      dv.middleCols(head * dh, dh).noalias() = a.transpose() * dctx_h;

      Mat<Scalar> dscores(seq_len, seq_len);
      for (Eigen::Index r = 0; r < seq_len; ++r) {
        const Scalar dot = da.row(r).cwiseProduct(a.row(r)).sum();
        dscores.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
      }
      dq.middleCols(head * dh, dh).noalias() = dscores * kh * scale;
      dk.middleCols(head * dh, dh).noalias() = dscores.transpose() * qh * scale;
    }

    gl.wq.noalias() += lc.h_in.transpose() * dq;
    gl.bq.row(0) += dq.colwise().sum();
    gl.wk.noalias() += lc.h_in.transpose() * dk;
    gl.bk.row(0) += dk.colwise().sum();
    gl.wv.noalias() += lc.h_in.transpose() * dv;
    gl.bv.row(0) += dv.colwise().sum();
    dh_in.noalias() += dq * layer.wq.transpose();
    dh_in.noalias() += dk * layer.wk.transpose();
    dh_in.noalias() += dv * layer.wv.transpose();

    dh_cur = std::move(dh_in);
  }

  if (cache.emb_drop.size() > 0) dh_cur = dh_cur.cwiseProduct(cache.emb_drop);
  Mat<Scalar> dx = detail::layer_norm_backward(dh_cur, cache.ln_emb, weights.emb_ln_gamma,
                                               grads.emb_ln_gamma, grads.emb_ln_beta);
  for (Eigen::Index t = 0; t < seq_len; ++t) {
    grads.token_embeddings.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    grads.positional_embeddings.row(t) += dx.row(t);
  }
}

/// Per-position vocabulary logits: encoder output times the tied embedding
/// matrix plus the MLM bias. Inference path, no dropout.
template <typename Scalar>
Mat<Scalar> forward_mlm(const ModelWeights<Scalar>& weights, std::span<const std::uint32_t> ids,
                        std::span<const std::uint8_t> attention_mask) {
  Mat<Scalar> h = encoder_forward(weights, ids, attention_mask);
  Mat<Scalar> logits = h * weights.token_embeddings.transpose();
  logits.rowwise() += weights.mlm_bias.row(0);
  if (!logits.allFinite()) throw NumericError("non-finite logits in forward_mlm");
  return logits;
}

/// One MLM training example: input ids (already masked), attention mask, and
/// (position, original id) labels at the selected positions.
struct MlmExample {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> mask;
  std::vector<std::pair<std::size_t, std::uint32_t>> labels;
};

using MlmBatch = std::vector<MlmExample>;

namespace detail {

template <typename Scalar>
double mlm_example_loss(const ModelWeights<Scalar>& weights, const MlmExample& example,
                        ForwardCache<Scalar>* cache, double inv_total_labels,
                        ModelWeights<Scalar>* grads, double dropout_rate, Rng* dropout_rng) {
  for (const auto& [pos, gold] : example.labels) {
    if (pos >= example.ids.size()) throw DataError("label position out of sequence range");
    if (gold >= static_cast<std::uint32_t>(weights.config.vocab_size)) {
      throw DataError("label id out of vocabulary range");
    }
  }
  Mat<Scalar> h = encoder_forward(weights, example.ids, example.mask, cache, dropout_rate,
                                  dropout_rng);
  const Eigen::Index n_labels = static_cast<Eigen::Index>(example.labels.size());
  const int vocab = weights.config.vocab_size;

  Mat<Scalar> h_labeled(n_labels, weights.config.d_model);
  for (Eigen::Index i = 0; i < n_labels; ++i) {
    h_labeled.row(i) = h.row(static_cast<Eigen::Index>(example.labels[i].first));
  }
  Mat<Scalar> logits = h_labeled * weights.token_embeddings.transpose();
  logits.rowwise() += weights.mlm_bias.row(0);

  double loss = 0.0;
  Mat<Scalar> probs(n_labels, vocab);
  for (Eigen::Index i = 0; i < n_labels; ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - mx).exp().matrix();
    const double denom = static_cast<double>(probs.row(i).sum());
    const auto gold = example.labels[static_cast<std::size_t>(i)].second;
    const double log_prob =
        static_cast<double>(logits(i, gold)) - static_cast<double>(mx) - std::log(denom);
    loss -= log_prob;
    probs.row(i) /= static_cast<Scalar>(denom);
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite MLM loss");
  if (grads == nullptr) return loss;

  // dlogits = (softmax - onehot) / total labeled positions.
  Mat<Scalar>& dlogits = probs;
  for (Eigen::Index i = 0; i < n_labels; ++i) {
    dlogits(i, example.labels[static_cast<std::size_t>(i)].second) -= Scalar(1);
  }
  dlogits *= static_cast<Scalar>(inv_total_labels);

  grads->mlm_bias.row(0) += dlogits.colwise().sum();
  grads->token_embeddings.noalias() += dlogits.transpose() * h_labeled;
  Mat<Scalar> dh = Mat<Scalar>::Zero(h.rows(), h.cols());
  Mat<Scalar> dh_labeled = dlogits * weights.token_embeddings;
  for (Eigen::Index i = 0; i < n_labels; ++i) {
    dh.row(static_cast<Eigen::Index>(example.labels[static_cast<std::size_t>(i)].first)) +=
        dh_labeled.row(i);
  }
  encoder_backward(weights, *cache, dh, *grads);
  return loss;
}

inline std::size_t total_labels(const MlmBatch& batch) {
  std::size_t total = 0;
  for (const auto& example : batch) total += example.labels.size();
  return total;
}

}  // namespace detail

/// Mean cross-entropy over the labeled positions of a batch.
template <typename Scalar>
double mlm_loss(const ModelWeights<Scalar>& weights, const MlmBatch& batch) {
  const std::size_t total = detail::total_labels(batch);
  if (total == 0) throw DataError("MLM batch has no masked positions");
  double loss = 0.0;
  for (const auto& example : batch) {
    loss += detail::mlm_example_loss<Scalar>(weights, example, nullptr, 0.0, nullptr, 0.0,
                                             nullptr);
  }
  return loss / static_cast<double>(total);
}

/// Loss plus exact gradients for every parameter tensor. Deterministic when
/// dropout is disabled (rate 0 or null rng).
template <typename Scalar>
std::pair<double, ModelWeights<Scalar>> loss_and_grads(const ModelWeights<Scalar>& weights,
                                                       const MlmBatch& batch,
                                                       double dropout_rate = 0.0,
                                                       Rng* dropout_rng = nullptr) {
  const std::size_t total = detail::total_labels(batch);
  if (total == 0) throw DataError("MLM batch has no masked positions");
  auto grads = ModelWeights<Scalar>::zeros(weights.config);
  const double inv_total = 1.0 / static_cast<double>(total);
  double loss = 0.0;
  for (const auto& example : batch) {
    detail::ForwardCache<Scalar> cache;
    loss += detail::mlm_example_loss(weights, example, &cache, inv_total, &grads, dropout_rate,
                                     dropout_rng);
  }
  return {loss / static_cast<double>(total), std::move(grads)};
}

/// CLS-position pooled representation (the position-0 hidden state).
template <typename Scalar>
Mat<Scalar> encode_cls(const ModelWeights<Scalar>& weights, std::span<const std::uint32_t> ids,
                       std::span<const std::uint8_t> attention_mask) {
  Mat<Scalar> h = encoder_forward(weights, ids, attention_mask);
  return h.row(0);
}

// ---------------------------------------------------------------------------
// Checkpoint glue
// ---------------------------------------------------------------------------

template <typename Scalar>
void save_model(const std::filesystem::path& path, const ModelWeights<Scalar>& weights) {
  io::Checkpoint ckpt;
  ckpt.meta = nlohmann::json{{"config", weights.config}};
  for (const auto& [name, m] : weights.tensor_ptrs()) {
    ckpt.tensors.emplace_back(name, m->template cast<float>());
  }
  io::save_checkpoint(path, ckpt);
}

template <typename Scalar = float>
ModelWeights<Scalar> load_model(const std::filesystem::path& path) {
  const io::Checkpoint ckpt = io::load_checkpoint(path);
  if (!ckpt.meta.contains("config")) {
    throw DataError("checkpoint has no encoder config: " + path.string());
  }
  const EncoderConfig config = ckpt.meta.at("config").get<EncoderConfig>();
  auto weights = ModelWeights<Scalar>::zeros(config);
  std::unordered_map<std::string, const io::MatrixF*> by_name;
  for (const auto& [name, m] : ckpt.tensors) by_name.emplace(name, &m);
  for (auto& [name, m] : weights.tensor_ptrs()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
    if (it->second->rows() != m->rows() || it->second->cols() != m->cols()) {
      throw DataError("checkpoint tensor '" + name + "' has mismatched shape");
    }
    *m = it->second->template cast<Scalar>();
  }
  return weights;
}

}  // namespace lexbridge

#endif  // LEXBRIDGE_MODEL_HPP
