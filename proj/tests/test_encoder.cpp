// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "scenafuse/encoder.hpp"
#include "scenafuse/rng.hpp"

using namespace scenafuse;

namespace {

Vocabulary tiny_vocab() {
  Vocabulary v = Vocabulary::with_reserved();
  for (const char* token : {"a", "b", "c", "d", "e", "f"}) v.add(token);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.normal() * 0.5;
  return t;
}

// Independent oracle: per-head loops, softmax by hand, explicit concat + W_o.
std::vector<double> mha_oracle(const Tensor& x, const BlockParams& block,
                               const std::vector<int>& mask) {
  const std::size_t l = x.rows(), d = x.cols();
  const std::size_t heads = block.heads.size();
  const std::size_t dh = block.heads[0].wq.cols();
  std::vector<double> merged(l * heads * dh, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const AttentionHeadParams& head = block.heads[h];
    std::vector<double> q(l * dh, 0.0), k(l * dh, 0.0), v(l * dh, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < dh; ++j) {
        double sq = 0.0, sk = 0.0, sv = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          sq += x(i, c) * head.wq(c, j);
          sk += x(i, c) * head.wk(c, j);
          sv += x(i, c) * head.wv(c, j);
        }
        q[i * dh + j] = sq;
        k[i * dh + j] = sk;
        v[i * dh + j] = sv;
      }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t i = 0; i < l; ++i) {
      std::vector<double> score(l);
      double mx = -1e300;
      for (std::size_t j = 0; j < l; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i * dh + c] * k[j * dh + c];
        s = s * scale + (mask[j] ? 0.0 : -1e9);
        score[j] = s;
        mx = std::max(mx, s);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < l; ++j) {
        score[j] = std::exp(score[j] - mx);
        total += score[j];
      }
      for (std::size_t j = 0; j < l; ++j) score[j] /= total;
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < l; ++j) acc += score[j] * v[j * dh + c];
        merged[i * heads * dh + h * dh + c] = acc;
      }
    }
  }
  std::vector<double> out(l * d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < heads * dh; ++c) {
        acc += merged[i * heads * dh + c] * block.wo(c, j);
      }
      out[i * d + j] = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("encode_pair lays out [CLS] P [SEP] H [SEP] PAD...") {
  Vocabulary v = tiny_vocab();
  InputEncoding enc = encode_pair({"a", "b"}, {"c"}, v, 10);
  const std::vector<int> want_ids = {Vocabulary::kCls, v.id_of("a"), v.id_of("b"),
                                     Vocabulary::kSep, v.id_of("c"), Vocabulary::kSep,
                                     0, 0, 0, 0};
  CHECK(enc.token_ids == want_ids);
  CHECK(enc.segment_ids == std::vector<int>{0, 0, 0, 0, 1, 1, 0, 0, 0, 0});
  CHECK(enc.attention_mask == std::vector<int>{1, 1, 1, 1, 1, 1, 0, 0, 0, 0});
  for (std::size_t i = 0; i < 10; ++i) CHECK(enc.position_ids[i] == static_cast<int>(i));
  CHECK(enc.real_length() == 6);
}

TEST_CASE("encode_pair truncates hypothesis tail first, then premise tail") {
  Vocabulary v = tiny_vocab();
  // 4 premise + 4 hypothesis + 3 specials = 11 > 9: drop 2 hypothesis tokens.
  InputEncoding enc = encode_pair({"a", "b", "c", "d"}, {"e", "f", "a", "b"}, v, 9);
  CHECK(enc.real_length() == 9);
  CHECK(enc.token_ids[5] == Vocabulary::kSep);  // premise intact
  CHECK(enc.token_ids[6] == v.id_of("e"));
  CHECK(enc.token_ids[7] == v.id_of("f"));
  CHECK(enc.token_ids[8] == Vocabulary::kSep);

  // Hypothesis bottoms out at one token before the premise shrinks.
  InputEncoding enc2 = encode_pair({"a", "b", "c", "d"}, {"e", "f"}, v, 7);
  CHECK(enc2.token_ids[1] == v.id_of("a"));
  CHECK(enc2.token_ids[2] == v.id_of("b"));
  CHECK(enc2.token_ids[3] == v.id_of("c"));
  CHECK(enc2.token_ids[4] == Vocabulary::kSep);
  CHECK(enc2.token_ids[5] == v.id_of("e"));
  CHECK(enc2.token_ids[6] == Vocabulary::kSep);

  CHECK_THROWS_AS(encode_pair({"a"}, {}, v, 10), std::invalid_argument);
  CHECK_THROWS_AS(encode_pair({}, {"a"}, v, 10), std::invalid_argument);
}

TEST_CASE("embed_inputs sums word, segment and position rows") {
  EncoderConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 4;
  cfg.n_heads = 2;
  cfg.max_len = 8;
  EncoderParams params = EncoderParams::init(cfg, 1);

  SUBCASE("zero tables give zero output") {
    for (double& v : params.word_emb.data()) v = 0.0;
    for (double& v : params.seg_emb.data()) v = 0.0;
    for (double& v : params.pos_emb.data()) v = 0.0;
    InputEncoding enc = encode_pair({"a"}, {"b"}, tiny_vocab(), 8);
    Tensor x = embed_inputs(enc, params);
    for (double v : x.data()) CHECK(v == 0.0);
  }

  SUBCASE("hand-built one-hot tables add up constructively") {
    for (double& v : params.word_emb.data()) v = 0.0;
    for (double& v : params.seg_emb.data()) v = 0.0;
    for (double& v : params.pos_emb.data()) v = 0.0;
    params.word_emb(5, 0) = 1.0;
    params.seg_emb(1, 1) = 2.0;
    params.pos_emb(3, 2) = 4.0;
    InputEncoding enc;
    enc.token_ids = {5, 5, 5, 5};
    enc.segment_ids = {0, 1, 1, 1};
    enc.position_ids = {0, 1, 2, 3};
    enc.attention_mask = {1, 1, 1, 1};
    Tensor x = embed_inputs(enc, params);
    CHECK(x(3, 0) == 1.0);
    CHECK(x(3, 1) == 2.0);
    CHECK(x(3, 2) == 4.0);
    CHECK(x(0, 1) == 0.0);
  }

  SUBCASE("row 3 equals the independent table-lookup sum exactly") {
    InputEncoding enc = encode_pair({"a", "b"}, {"c"}, tiny_vocab(), 8);
    Tensor x = embed_inputs(enc, params);
    const std::size_t i = 3;
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      const double expect =
          params.word_emb(static_cast<std::size_t>(enc.token_ids[i]), j) +
          params.seg_emb(static_cast<std::size_t>(enc.segment_ids[i]), j) +
          params.pos_emb(i, j);
      CHECK(x(i, j) == expect);
    }
  }

  SUBCASE("out-of-range ids error") {
    InputEncoding enc;
    enc.token_ids = {99};
    enc.segment_ids = {0};
    enc.position_ids = {0};
    enc.attention_mask = {1};
    CHECK_THROWS_AS(embed_inputs(enc, params), std::invalid_argument);
  }
}

TEST_CASE("single-token attention projects its own value vector") {
  EncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 6;
  cfg.n_heads = 2;
  cfg.max_len = 4;
  EncoderParams params = EncoderParams::init(cfg, 3);
  const BlockParams& block = params.blocks[0];

  Rng rng(4);
  Tensor x = random_tensor({1, 6}, rng);
  AttentionOut att = multi_head_attention(x, block, {1});
  CHECK(att.weights.shape() == Shape{2, 1, 1});
  CHECK(att.weights.data()[0] == 1.0);
  CHECK(att.weights.data()[1] == 1.0);

  // Expected: concat of per-head value projections, output-projected.
  Tensor v0 = matmul(x, block.heads[0].wv);
  Tensor v1 = matmul(x, block.heads[1].wv);
  Tensor expect = matmul(concat(v0, v1, 1), block.wo);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(att.context(0, j) == doctest::Approx(expect(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("a lone unmasked key takes all attention") {
  EncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.max_len = 5;
  EncoderParams params = EncoderParams::init(cfg, 9);
  Rng rng(10);
  Tensor x = random_tensor({5, 8}, rng);
  const std::vector<int> mask = {0, 0, 1, 0, 0};
  AttentionOut att = multi_head_attention(x, params.blocks[0], mask);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        const double w = att.weights.data()[(h * 5 + i) * 5 + j];
        CHECK(w == (j == 2 ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("multi-head attention matches the naive loop oracle") {
  EncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.max_len = 3;
  EncoderParams params = EncoderParams::init(cfg, 21);
  Rng rng(22);
  Tensor x = random_tensor({3, 8}, rng);
  const std::vector<int> mask = {1, 1, 0};
  AttentionOut att = multi_head_attention(x, params.blocks[0], mask);
  const std::vector<double> expect = mha_oracle(x, params.blocks[0], mask);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(att.context.data()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights: rows sum to 1, masked mass vanishes") {
  EncoderConfig cfg;
  cfg.vocab_size = 16;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.max_len = 9;
  EncoderParams params = EncoderParams::init(cfg, 31);
  Rng rng(32);
  Tensor x = random_tensor({9, 16}, rng);
  const std::vector<int> mask = {1, 1, 1, 1, 1, 1, 0, 0, 0};
  AttentionOut att = multi_head_attention(x, params.blocks[0], mask);
  for (std::size_t h = 0; h < 4; ++h) {
    for (std::size_t i = 0; i < 9; ++i) {
      double row_sum = 0.0, masked = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        const double w = att.weights.data()[(h * 9 + i) * 9 + j];
        row_sum += w;
        if (!mask[j]) masked += w;
      }
      CHECK(std::abs(row_sum - 1.0) <= 1e-10);
      CHECK(masked < 1e-8);
    }
  }
}

TEST_CASE("block override semantics") {
  EncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.max_len = 4;
  EncoderParams params = EncoderParams::init(cfg, 41);
  const BlockParams& block = params.blocks[0];
  Rng rng(42);
  Tensor x = random_tensor({4, 8}, rng);
  const std::vector<int> mask = {1, 1, 1, 1};

  SUBCASE("override with the block's own attention output is bitwise identical") {
    Tensor plain = transformer_block_forward(x, block, mask);
    Tensor own_attention = multi_head_attention(x, block, mask).context;
    Tensor with_override = transformer_block_forward(x, block, mask, &own_attention);
    for (std::size_t i = 0; i < plain.numel(); ++i) {
      CHECK(plain.data()[i] == with_override.data()[i]);
    }
  }

  SUBCASE("zero override reduces the first sublayer to LN(x)") {
    Tensor zeros = Tensor::zeros({4, 8});
    Tensor out = transformer_block_forward(x, block, mask, &zeros);
    Tensor y = layer_norm(x, block.ln1_gain, block.ln1_bias);
    Tensor ffn = matmul(gelu(matmul(y, block.ffn_w1)), block.ffn_w2);
    Tensor expect = layer_norm(add(y, ffn), block.ln2_gain, block.ln2_bias);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == expect.data()[i]);
  }

  SUBCASE("override shape mismatch errors") {
    Tensor bad = Tensor::zeros({4, 6});
    CHECK_THROWS_AS(transformer_block_forward(x, block, mask, &bad),
                    std::invalid_argument);
  }

  SUBCASE("post-LN rows have near-zero mean pre-affine") {
    // unit gain, zero bias makes the affine transparent
    EncoderParams p2 = params;
    Tensor out = transformer_block_forward(x, p2.blocks[0], mask);
    for (std::size_t i = 0; i < 4; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < 8; ++j) mean += out(i, j);
      CHECK(std::abs(mean / 8.0) < 1e-10);
    }
  }
}

TEST_CASE("classify reads the CLS row through W_f") {
  EncoderConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 5;
  cfg.n_heads = 1;
  cfg.max_len = 4;
  EncoderParams params = EncoderParams::init(cfg, 51);
  Rng rng(52);
  Tensor hidden = random_tensor({4, 5}, rng);

  SUBCASE("zero classifier gives zero logits") {
    for (double& v : params.w_f.data()) v = 0.0;
    Tensor logits = classify(hidden, params);
    CHECK(logits.shape() == Shape{3});
    for (double v : logits.data()) CHECK(v == 0.0);
  }

  SUBCASE("identity-like columns copy CLS coordinates") {
    for (double& v : params.w_f.data()) v = 0.0;
    params.w_f(0, 0) = 1.0;
    params.w_f(1, 1) = 1.0;
    params.w_f(2, 2) = 1.0;
    Tensor logits = classify(hidden, params);
    CHECK(logits.data()[0] == hidden(0, 0));
    CHECK(logits.data()[1] == hidden(0, 1));
    CHECK(logits.data()[2] == hidden(0, 2));
  }

  SUBCASE("random case matches a dot-product oracle") {
    Tensor logits = classify(hidden, params);
    for (std::size_t c = 0; c < 3; ++c) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 5; ++j) expect += hidden(0, j) * params.w_f(j, c);
      CHECK(logits.data()[c] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("appending extra padding leaves CLS logits unchanged") {
  EncoderConfig cfg;
  cfg.vocab_size = 16;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.n_blocks = 2;
  cfg.max_len = 16;
  EncoderParams params = EncoderParams::init(cfg, 61);
  Vocabulary v = tiny_vocab();

  InputEncoding short_enc = encode_pair({"a", "b"}, {"c", "d"}, v, 10);
  InputEncoding long_enc = encode_pair({"a", "b"}, {"c", "d"}, v, 16);
  Tensor logits_short = classify(encoder_forward(short_enc, params), params);
  Tensor logits_long = classify(encoder_forward(long_enc, params), params);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(std::abs(logits_short.data()[c] - logits_long.data()[c]) < 1e-8);
  }
}

TEST_CASE("end-to-end gradient check on a 2-block d=8 l=6 model") {
  EncoderConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.max_len = 6;
  EncoderParams params = EncoderParams::init(cfg, 71);
  Vocabulary v = tiny_vocab();
  InputEncoding enc = encode_pair({"a", "b"}, {"c"}, v, 6);

  // Checked at O(1) parameter scale so every gradient clears the
  // finite-difference noise floor.
  Rng rng(72);
  std::vector<Tensor> flat;
  for (auto& [name, tensor] : params.named()) {
    Tensor t = tensor;
    for (double& x : t.data()) x = rng.uniform() - 0.5;
    flat.push_back(t);
  }
  const int label[1] = {2};
  auto loss_fn = [&]() {
    Tensor hidden = encoder_forward(enc, params);
    return cross_entropy(classify(hidden, params), label);
  };
  CHECK(grad_check(loss_fn, flat) < 1e-4);
}

TEST_CASE("vocabulary file round-trip and reserved line enforcement") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "vocab_test.txt").string();
  Vocabulary v = tiny_vocab();
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id_of("c") == v.id_of("c"));
  CHECK(loaded.id_of("zzz") == Vocabulary::kUnk);
  CHECK(loaded.token_of(Vocabulary::kCls) == "[CLS]");

  {
    std::ofstream os(path, std::ios::trunc);
    os << "[PAD]\n[CLS]\nwrong\n[UNK]\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(path), std::runtime_error);
  std::remove(path.c_str());
}
