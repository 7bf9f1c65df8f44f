// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/adapter.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "scenafuse/rng.hpp"

namespace scenafuse {

namespace {

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sigma = 0.02) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.data()) v = rng.truncated_normal(sigma);
  return t;
}

Tensor init_vector(std::size_t n) { return Tensor::full({n}, 0.0, true); }

void check_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " +
                                shape_str({rows, cols}) + ", got " + shape_str(t.shape()));
  }
}

InteractionAttentionParams init_interaction(const AdapterConfig& cfg, Rng& rng) {
  InteractionAttentionParams p;
  p.heads.resize(cfg.heads);
  for (InteractionHeadParams& head : p.heads) {
    head.wq = init_matrix(cfg.hidden, cfg.head_dim(), rng);
    head.wk = init_matrix(cfg.hidden, cfg.head_dim(), rng);
    head.wv = init_matrix(cfg.hidden, cfg.head_dim(), rng);
  }
  p.wo = init_matrix(cfg.hidden, cfg.hidden, rng);
  return p;
}

Tensor stack_weights(const std::vector<Tensor>& per_head) {
  const std::size_t heads = per_head.size();
  const std::size_t lq = per_head[0].rows(), lk = per_head[0].cols();
  Tensor out = Tensor::zeros({heads, lq, lk});
  double* dst = out.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    std::copy(per_head[h].data().begin(), per_head[h].data().end(), dst + h * lq * lk);
  }
  return out;
}

// Multi-head attention shared by Eq. 2 and Eq. 3; bias-free projections,
// per-head scale 1/sqrt(t / h_a).
Tensor interaction_attention(const Tensor& queries, const Tensor& keys_values,
                             const InteractionAttentionParams& params,
                             const Tensor* key_mask, Tensor* weights_out) {
  const double scale_factor =
      1.0 / std::sqrt(static_cast<double>(params.heads[0].wq.cols()));
  std::vector<Tensor> weights;
  weights.reserve(params.heads.size());
  Tensor merged;
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    const InteractionHeadParams& head = params.heads[h];
    Tensor q = matmul(queries, head.wq);
    Tensor k = matmul(keys_values, head.wk);
    Tensor v = matmul(keys_values, head.wv);
    AttentionOut att = scaled_dot_attention(q, k, v, key_mask, scale_factor);
    if (weights_out != nullptr) weights.push_back(att.weights.detached());
    merged = h == 0 ? att.context : concat(merged, att.context, 1);
  }
  if (weights_out != nullptr) *weights_out = stack_weights(weights);
  return matmul(merged, params.wo);
}

Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0), 1.0); }

}  // namespace

void AblationConfig::validate() const {
  if (disable_vesr && disable_srvr) {
    throw std::invalid_argument(
        "ablation: disable_vesr and disable_srvr are mutually exclusive");
  }
}

AblationConfig AblationConfig::from_name(const std::string& name) {
  AblationConfig a;
  if (name == "full") return a;
  if (name == "no-isi") { a.disable_isi = true; return a; }
  if (name == "no-vesr") { a.disable_vesr = true; return a; }
  if (name == "no-srvr") { a.disable_srvr = true; return a; }
  if (name == "no-isf") { a.disable_isf = true; return a; }
  if (name == "no-gm") { a.disable_gm = true; return a; }
  if (name == "no-fm") { a.disable_fm = true; return a; }
  throw std::invalid_argument("ablation: unknown variant '" + name + "'");
}

std::string AblationConfig::name() const {
  if (disable_isi) return "no-isi";
  if (disable_vesr) return "no-vesr";
  if (disable_srvr) return "no-srvr";
  if (disable_isf) return "no-isf";
  if (disable_gm) return "no-gm";
  if (disable_fm) return "no-fm";
  return "full";
}

AdapterParams AdapterParams::init(const AdapterConfig& cfg, const AblationConfig& ablation,
                                  std::uint64_t seed) {
  ablation.validate();
  if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0) {
    throw std::invalid_argument("adapter: heads must divide hidden dim");
  }
  Rng rng(derive_seed(seed, "adapter"));
  AdapterParams p;
  p.cfg = cfg;
  p.ablation = ablation;
  const std::size_t t = cfg.hidden, l = cfg.text_len, k = cfg.visual_len;

  p.phi = init_matrix(cfg.text_dim, t, rng);
  p.psi = init_matrix(cfg.visual_dim, t, rng);
  if (!ablation.disable_vesr) p.vea = init_interaction(cfg, rng);
  if (!ablation.disable_srvr) p.sra = init_interaction(cfg, rng);

  std::size_t int_rows = k + l;
  if (ablation.disable_vesr) int_rows = l;
  if (ablation.disable_srvr) int_rows = k;
  p.phi_int = init_matrix(int_rows, l, rng);

  if (ablation.disable_isf) {
    p.w_isf = init_matrix(2 * t, t, rng);
    return p;
  }
  p.w_alpha = init_matrix(2 * t, 1, rng);
  p.b_alpha = init_vector(1);
  p.w_z = init_matrix(1, t, rng);
  p.b_z = init_vector(t);
  p.w_beta = init_matrix(2 * t, 1, rng);
  p.b_beta = init_vector(1);
  p.w_x = init_matrix(1, t, rng);
  p.b_x = init_vector(t);
  if (!ablation.disable_gm) {
    p.w_g = init_matrix(2 * t, 1, rng);
    p.b_g = init_vector(1);
  }
  if (!ablation.disable_fm) {
    p.w_h = init_matrix(2 * t, 1, rng);
    p.b_h = init_vector(1);
    // near-zero so the residual path starts text-dominated
    p.w_r = init_matrix(t, t, rng, 0.001);
    p.b_r = init_vector(t);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> AdapterParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push = [&out](const std::string& name, const Tensor& t) {
    if (t.defined()) out.emplace_back("adapter/" + name, t);
  };
  push("phi", phi);
  push("psi", psi);
  auto push_attention = [&push](const std::string& base,
                                const InteractionAttentionParams& p) {
    for (std::size_t h = 0; h < p.heads.size(); ++h) {
      const std::string hb = base + "/head" + std::to_string(h) + "/";
      push(hb + "wq", p.heads[h].wq);
      push(hb + "wk", p.heads[h].wk);
      push(hb + "wv", p.heads[h].wv);
    }
    if (p.wo.defined()) push(base + "/wo", p.wo);
  };
  push_attention("vea", vea);
  push_attention("sra", sra);
  push("phi_int", phi_int);
  push("w_alpha", w_alpha);
  push("b_alpha", b_alpha);
  push("w_z", w_z);
  push("b_z", b_z);
  push("w_beta", w_beta);
  push("b_beta", b_beta);
  push("w_x", w_x);
  push("b_x", b_x);
  push("w_g", w_g);
  push("b_g", b_g);
  push("w_h", w_h);
  push("b_h", b_h);
  push("w_r", w_r);
  push("b_r", b_r);
  push("w_isf", w_isf);
  return out;
}

ProjectedModalities project_modalities(const Tensor& x_tex, const Tensor& x_vis,
                                       const AdapterParams& params) {
  if (x_tex.cols() != params.phi.rows()) {
    throw std::invalid_argument("project_modalities: text dim " +
                                shape_str(x_tex.shape()) + " does not match phi " +
                                shape_str(params.phi.shape()));
  }
  if (x_vis.cols() != params.psi.rows()) {
    throw std::invalid_argument("project_modalities: visual dim " +
                                shape_str(x_vis.shape()) + " does not match psi " +
                                shape_str(params.psi.shape()));
  }
  return {matmul(x_tex, params.phi), matmul(x_vis, params.psi)};
}

Tensor visual_enhanced_attention(const Tensor& text, const Tensor& visual,
                                 const AdapterParams& params,
                                 const std::vector<int>& text_mask,
                                 Tensor* weights_out) {
  if (text_mask.size() != text.rows()) {
    throw std::invalid_argument("visual_enhanced_attention: mask length " +
                                std::to_string(text_mask.size()) + " vs text rows " +
                                std::to_string(text.rows()));
  }
  if (std::accumulate(text_mask.begin(), text_mask.end(), 0) == 0) {
    throw std::invalid_argument(
        "visual_enhanced_attention: all text positions are masked");
  }
  const Tensor mask_row = additive_key_mask(text_mask);
  Tensor out = interaction_attention(visual, text, params.vea, &mask_row, weights_out);
  check_shape(out, visual.rows(), params.cfg.hidden, "visual_enhanced_attention output");
  return out;
}

Tensor sentence_rectified_attention(const Tensor& text, const Tensor& visual,
                                    const AdapterParams& params, Tensor* weights_out) {
  if (visual.rows() == 0) {
    throw std::invalid_argument("sentence_rectified_attention: no visual blocks");
  }
  Tensor out = interaction_attention(text, visual, params.sra, nullptr, weights_out);
  check_shape(out, text.rows(), params.cfg.hidden, "sentence_rectified_attention output");
  return out;
}

Tensor interact(const Tensor& z_tex, const Tensor& z_vis, const AdapterParams& params) {
  Tensor merged = concat(z_tex, z_vis, 0);
  if (params.phi_int.rows() != merged.rows()) {
    throw std::invalid_argument("interact: sequence length " +
                                std::to_string(merged.rows()) + " does not match phi_int " +
                                shape_str(params.phi_int.shape()));
  }
  return matmul(transpose(params.phi_int), merged);
}

RectifiedPair rectify_representations(const Tensor& text, const Tensor& z_int,
                                      const AdapterParams& params) {
  const std::size_t axis = params.cfg.rectify_axis == RectifyAxis::feature ? 1 : 0;
  Tensor alpha = tanh(add(matmul(concat(text, z_int, 1), params.w_alpha), params.b_alpha));
  Tensor z_factor = softmax(add(matmul(alpha, params.w_z), params.b_z), axis);
  Tensor int_hat = mul(z_int, z_factor);
  Tensor beta = tanh(add(matmul(concat(int_hat, text, 1), params.w_beta), params.b_beta));
  Tensor x_factor = softmax(add(matmul(beta, params.w_x), params.b_x), axis);
  Tensor text_hat = mul(text, x_factor);
  return {text_hat, int_hat};
}

Tensor gate_merge(const Tensor& text_hat, const Tensor& int_hat,
                  const AdapterParams& params) {
  Tensor g = sigmoid(add(matmul(concat(text_hat, int_hat, 1), params.w_g), params.b_g));
  return add(mul(text_hat, g), mul(int_hat, one_minus(g)));
}

Tensor filter_fuse(const Tensor& fused, const Tensor& text, const AdapterParams& params) {
  Tensor h = sigmoid(add(matmul(concat(fused, text, 1), params.w_h), params.b_h));
  Tensor transformed = tanh(add(matmul(fused, params.w_r), params.b_r));
  return mul(transformed, h);
}

Tensor adapter_forward(const Tensor& x_embeddings, const VisualFeatures& visual,
                       const AdapterParams& params, const AblationConfig& ablation,
                       const std::vector<int>& text_mask, AdapterTrace* trace) {
  ablation.validate();
  if (ablation.disable_isi) {
    throw std::invalid_argument(
        "adapter_forward: disable_isi bypasses the adapter; do not call it");
  }
  const std::size_t l = params.cfg.text_len;
  const std::size_t k = params.cfg.visual_len;
  const std::size_t t = params.cfg.hidden;
  check_shape(x_embeddings, l, params.cfg.text_dim, "adapter input embeddings");
  check_shape(visual.blocks, k, params.cfg.visual_dim, "adapter visual blocks");

  ProjectedModalities proj = project_modalities(x_embeddings, visual.blocks, params);
  check_shape(proj.text, l, t, "projected text");
  check_shape(proj.visual, k, t, "projected visual");

  // Eq. 3 rows at padded positions are computed but zeroed before Eq. 4.
  Tensor row_mask = Tensor::zeros({l, 1});
  for (std::size_t i = 0; i < l; ++i) row_mask.data()[i] = text_mask[i] ? 1.0 : 0.0;

  Tensor z_int;
  if (ablation.disable_vesr) {
    Tensor z_vis = sentence_rectified_attention(proj.text, proj.visual, params,
                                                trace ? &trace->sra_weights : nullptr);
    check_shape(z_vis, l, t, "Z_vis");
    z_int = matmul(transpose(params.phi_int), mul(z_vis, row_mask));
  } else if (ablation.disable_srvr) {
    Tensor z_tex = visual_enhanced_attention(proj.text, proj.visual, params, text_mask,
                                             trace ? &trace->vea_weights : nullptr);
    check_shape(z_tex, k, t, "Z_tex");
    z_int = matmul(transpose(params.phi_int), z_tex);
  } else {
    Tensor z_tex = visual_enhanced_attention(proj.text, proj.visual, params, text_mask,
                                             trace ? &trace->vea_weights : nullptr);
    Tensor z_vis = sentence_rectified_attention(proj.text, proj.visual, params,
                                                trace ? &trace->sra_weights : nullptr);
    check_shape(z_tex, k, t, "Z_tex");
    check_shape(z_vis, l, t, "Z_vis");
    z_int = interact(z_tex, mul(z_vis, row_mask), params);
  }
  check_shape(z_int, l, t, "Z_int");

  if (ablation.disable_isf) {
    Tensor r = matmul(concat(proj.text, z_int, 1), params.w_isf);
    check_shape(r, l, t, "R");
    return r;
  }

  RectifiedPair rectified = rectify_representations(proj.text, z_int, params);
  check_shape(rectified.text, l, t, "rectified text");
  check_shape(rectified.interaction, l, t, "rectified interaction");

  Tensor fused = ablation.disable_gm
                     ? scale(add(rectified.text, rectified.interaction), 0.5)
                     : gate_merge(rectified.text, rectified.interaction, params);
  check_shape(fused, l, t, "U");

  Tensor r = ablation.disable_fm ? scale(add(fused, proj.text), 0.5)
                                 : filter_fuse(fused, proj.text, params);
  check_shape(r, l, t, "R");
  return r;
}

}  // namespace scenafuse
