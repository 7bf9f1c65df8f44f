// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace scenafuse {

namespace {

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sigma = 0.02) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.data()) v = rng.truncated_normal(sigma);
  return t;
}

Tensor init_vector(std::size_t n, double value) {
  return Tensor::full({n}, value, true);
}

}  // namespace

std::size_t InputEncoding::real_length() const {
  std::size_t n = 0;
  for (int m : attention_mask) n += static_cast<std::size_t>(m);
  return n;
}

InputEncoding encode_pair(const std::vector<std::string>& premise,
                          const std::vector<std::string>& hypothesis,
                          const Vocabulary& vocab, std::size_t max_len) {
  if (premise.empty()) throw std::invalid_argument("encode_pair: empty premise");
  if (hypothesis.empty()) throw std::invalid_argument("encode_pair: empty hypothesis");
  if (max_len < 5) throw std::invalid_argument("encode_pair: max_len must be >= 5");

  std::size_t p_len = premise.size();
  std::size_t h_len = hypothesis.size();
  // Hypothesis tail goes first, then premise tail; one token of each survives.
  while (p_len + h_len + 3 > max_len) {
    if (h_len > 1) --h_len;
    else --p_len;
  }

  InputEncoding enc;
  enc.token_ids.reserve(max_len);
  enc.token_ids.push_back(Vocabulary::kCls);
  for (std::size_t i = 0; i < p_len; ++i) enc.token_ids.push_back(vocab.id_of(premise[i]));
  enc.token_ids.push_back(Vocabulary::kSep);
  const std::size_t first_sep = enc.token_ids.size() - 1;
  for (std::size_t i = 0; i < h_len; ++i) enc.token_ids.push_back(vocab.id_of(hypothesis[i]));
  enc.token_ids.push_back(Vocabulary::kSep);
  const std::size_t real = enc.token_ids.size();
  enc.token_ids.resize(max_len, Vocabulary::kPad);

  enc.segment_ids.assign(max_len, 0);
  for (std::size_t i = first_sep + 1; i < real; ++i) enc.segment_ids[i] = 1;
  enc.position_ids.resize(max_len);
  for (std::size_t i = 0; i < max_len; ++i) enc.position_ids[i] = static_cast<int>(i);
  enc.attention_mask.assign(max_len, 0);
  for (std::size_t i = 0; i < real; ++i) enc.attention_mask[i] = 1;
  return enc;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) {
    throw std::invalid_argument("encoder: n_heads must divide d_model");
  }
  Rng rng(derive_seed(seed, "encoder"));
  EncoderParams p;
  p.cfg = cfg;
  const std::size_t d = cfg.d_model, dh = cfg.head_dim(), ff = cfg.ffn_mult * d;
  p.word_emb = init_matrix(cfg.vocab_size, d, rng);
  p.seg_emb = init_matrix(2, d, rng);
  p.pos_emb = init_matrix(cfg.max_len, d, rng);
  p.blocks.resize(cfg.n_blocks);
  for (BlockParams& block : p.blocks) {
    block.heads.resize(cfg.n_heads);
    for (AttentionHeadParams& head : block.heads) {
      head.wq = init_matrix(d, dh, rng);
      head.wk = init_matrix(d, dh, rng);
      head.wv = init_matrix(d, dh, rng);
    }
    block.wo = init_matrix(d, d, rng);
    block.ffn_w1 = init_matrix(d, ff, rng);
    block.ffn_w2 = init_matrix(ff, d, rng);
    block.ln1_gain = init_vector(d, 1.0);
    block.ln1_bias = init_vector(d, 0.0);
    block.ln2_gain = init_vector(d, 1.0);
    block.ln2_bias = init_vector(d, 0.0);
  }
  p.w_f = init_matrix(d, 3, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder/word_emb", word_emb);
  out.emplace_back("encoder/seg_emb", seg_emb);
  out.emplace_back("encoder/pos_emb", pos_emb);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string base = "encoder/block" + std::to_string(b) + "/";
    const BlockParams& block = blocks[b];
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
      const std::string hb = base + "attn/head" + std::to_string(h) + "/";
      out.emplace_back(hb + "wq", block.heads[h].wq);
      out.emplace_back(hb + "wk", block.heads[h].wk);
      out.emplace_back(hb + "wv", block.heads[h].wv);
    }
    out.emplace_back(base + "attn/wo", block.wo);
    out.emplace_back(base + "ffn/w1", block.ffn_w1);
    out.emplace_back(base + "ffn/w2", block.ffn_w2);
    out.emplace_back(base + "ln1/gain", block.ln1_gain);
    out.emplace_back(base + "ln1/bias", block.ln1_bias);
    out.emplace_back(base + "ln2/gain", block.ln2_gain);
    out.emplace_back(base + "ln2/bias", block.ln2_bias);
  }
  out.emplace_back("encoder/w_f", w_f);
  return out;
}

Tensor dropout(const Tensor& x, const DropoutCtx& ctx) {
  if (ctx.p <= 0.0 || ctx.rng == nullptr) return x;
  const double keep = 1.0 - ctx.p;
  Tensor mask = Tensor::zeros(x.shape());
  for (double& v : mask.data()) v = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, mask);
}

Tensor embed_inputs(const InputEncoding& enc, const EncoderParams& params) {
  if (enc.length() > params.cfg.max_len) {
    throw std::invalid_argument("embed_inputs: sequence longer than position table");
  }
  Tensor words = gather_rows(params.word_emb, enc.token_ids);
  Tensor segs = gather_rows(params.seg_emb, enc.segment_ids);
  Tensor pos = gather_rows(params.pos_emb, enc.position_ids);
  return add(add(words, segs), pos);
}

Tensor additive_key_mask(const std::vector<int>& attention_mask) {
  Tensor row = Tensor::zeros({1, attention_mask.size()});
  for (std::size_t i = 0; i < attention_mask.size(); ++i) {
    row.data()[i] = attention_mask[i] ? 0.0 : -1e9;
  }
  return row;
}

AttentionOut scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor* key_mask, double scale_factor) {
  Tensor scores = scale(matmul(q, transpose(k)), scale_factor);
  if (key_mask != nullptr) scores = add(scores, *key_mask);
  Tensor weights = softmax(scores, 1);
  Tensor context = matmul(weights, v);
  return {context, weights};
}

namespace {

Tensor stack_head_weights(const std::vector<Tensor>& per_head) {
  const std::size_t heads = per_head.size();
  const std::size_t lq = per_head[0].rows(), lk = per_head[0].cols();
  Tensor out = Tensor::zeros({heads, lq, lk});
  double* dst = out.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    std::copy(per_head[h].data().begin(), per_head[h].data().end(), dst + h * lq * lk);
  }
  return out;
}

}  // namespace

AttentionOut multi_head_attention(const Tensor& x, const BlockParams& block,
                                  const std::vector<int>& attention_mask) {
  const std::size_t n_heads = block.heads.size();
  const Tensor mask_row = additive_key_mask(attention_mask);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(block.heads[0].wq.cols()));
  std::vector<Tensor> weights;
  weights.reserve(n_heads);
  Tensor merged;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const AttentionHeadParams& head = block.heads[h];
    Tensor q = matmul(x, head.wq);
    Tensor k = matmul(x, head.wk);
    Tensor v = matmul(x, head.wv);
    AttentionOut att = scaled_dot_attention(q, k, v, &mask_row, scale_factor);
    weights.push_back(att.weights.detached());
    merged = h == 0 ? att.context : concat(merged, att.context, 1);
  }
  return {matmul(merged, block.wo), stack_head_weights(weights)};
}

Tensor transformer_block_forward(const Tensor& x, const BlockParams& block,
                                 const std::vector<int>& attention_mask,
                                 const Tensor* attention_override,
                                 const DropoutCtx& drop, Tensor* weights_out) {
  Tensor sublayer;
  if (attention_override != nullptr) {
    if (attention_override->shape() != x.shape()) {
      throw std::invalid_argument("transformer_block_forward: override shape " +
                                  shape_str(attention_override->shape()) +
                                  " does not match input " + shape_str(x.shape()));
    }
    sublayer = *attention_override;
  } else {
    AttentionOut att = multi_head_attention(x, block, attention_mask);
    sublayer = att.context;
    if (weights_out != nullptr) *weights_out = att.weights;
  }
  Tensor y = layer_norm(add(x, dropout(sublayer, drop)), block.ln1_gain, block.ln1_bias);
  Tensor ffn = matmul(gelu(matmul(y, block.ffn_w1)), block.ffn_w2);
  return layer_norm(add(y, dropout(ffn, drop)), block.ln2_gain, block.ln2_bias);
}

Tensor classify(const Tensor& hidden, const EncoderParams& params) {
  const int cls_row[1] = {0};
  Tensor cls = gather_rows(hidden, cls_row);
  Tensor logits = matmul(cls, params.w_f);
  return reshape(logits, {3});
}

Tensor encoder_forward(const InputEncoding& enc, const EncoderParams& params,
                       const Tensor* bottom_override, const DropoutCtx& drop,
                       EncoderTrace* trace) {
  Tensor x = embed_inputs(enc, params);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    Tensor weights;
    const Tensor* override_ptr = b == 0 ? bottom_override : nullptr;
    x = transformer_block_forward(x, params.blocks[b], enc.attention_mask, override_ptr,
                                  drop, trace != nullptr ? &weights : nullptr);
    if (trace != nullptr) trace->block_weights.push_back(weights);
  }
  return x;
}

}  // namespace scenafuse
