// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scenafuse/rng.hpp"
#include "scenafuse/tensor.hpp"
#include "scenafuse/vocab.hpp"

namespace scenafuse {

/// Padded "[CLS] P [SEP] H [SEP]" encoding of a premise-hypothesis pair.
struct InputEncoding {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;   // 0 through the first [SEP], 1 after
  std::vector<int> position_ids;  // 0..l-1
  std::vector<int> attention_mask;  // 1 real, 0 padding

  std::size_t length() const { return token_ids.size(); }
  std::size_t real_length() const;
};

/// Lays out [CLS] P [SEP] H [SEP] PAD... at the fixed length max_len.
/// Overlong pairs lose hypothesis tail tokens first, then premise tail.
InputEncoding encode_pair(const std::vector<std::string>& premise,
                          const std::vector<std::string>& hypothesis,
                          const Vocabulary& vocab, std::size_t max_len);

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_blocks = 2;
  std::size_t max_len = 24;
  std::size_t ffn_mult = 4;

  std::size_t head_dim() const { return d_model / n_heads; }
};

struct AttentionHeadParams {
  Tensor wq, wk, wv;  // d x d_h
};

struct BlockParams {
  std::vector<AttentionHeadParams> heads;
  Tensor wo;                  // d x d
  Tensor ffn_w1;              // d x 4d
  Tensor ffn_w2;              // 4d x d
  Tensor ln1_gain, ln1_bias;  // rank-1 d
  Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
  EncoderConfig cfg;
  Tensor word_emb;  // V x d
  Tensor seg_emb;   // 2 x d
  Tensor pos_emb;   // max_len x d
  std::vector<BlockParams> blocks;
  Tensor w_f;  // d x 3 classifier

  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

struct DropoutCtx {
  double p = 0.0;
  Rng* rng = nullptr;
};

/// Inverted dropout; identity when p <= 0 or no stream is attached.
Tensor dropout(const Tensor& x, const DropoutCtx& ctx);

/// Row i = word_emb[token_ids[i]] + seg_emb[segment_ids[i]] + pos_emb[i].
Tensor embed_inputs(const InputEncoding& enc, const EncoderParams& params);

struct AttentionOut {
  Tensor context;  // lq x head_dim (single head) or lq x d (multi-head)
  Tensor weights;  // lq x lk (single head) or heads x lq x lk, detached
};

/// One head of scaled dot-product attention. key_mask, when given, holds an
/// additive 1 x lk row (0 for real keys, -1e9 for padded ones).
AttentionOut scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor* key_mask, double scale_factor);

/// Builds the additive key-mask row from a 0/1 attention mask.
Tensor additive_key_mask(const std::vector<int>& attention_mask);

AttentionOut multi_head_attention(const Tensor& x, const BlockParams& block,
                                  const std::vector<int>& attention_mask);

/// Post-LN block: y = LN(x + attn(x)); out = LN(y + FFN(y)). When
/// attention_override is given it replaces the attention sublayer output
/// before the residual connection.
Tensor transformer_block_forward(const Tensor& x, const BlockParams& block,
                                 const std::vector<int>& attention_mask,
                                 const Tensor* attention_override = nullptr,
                                 const DropoutCtx& drop = {},
                                 Tensor* weights_out = nullptr);

/// CLS-row logits: hidden[0] . W_f, returned as a rank-1 tensor of 3.
Tensor classify(const Tensor& hidden, const EncoderParams& params);

struct EncoderTrace {
  std::vector<Tensor> block_weights;  // per block: heads x l x l
};

/// Full stack: embeddings, blocks (bottom block may take an override), final
/// hidden states l x d.
Tensor encoder_forward(const InputEncoding& enc, const EncoderParams& params,
                       const Tensor* bottom_override = nullptr,
                       const DropoutCtx& drop = {}, EncoderTrace* trace = nullptr);

}  // namespace scenafuse
