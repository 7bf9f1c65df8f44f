// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenafuse/encoder.hpp"
#include "scenafuse/scenario.hpp"
#include "scenafuse/tensor.hpp"

namespace scenafuse {

/// Axis of the softmax factors applied inside rectification: feature gives
/// each token a distribution over its t features, sequence distributes over
/// positions instead.
enum class RectifyAxis { feature, sequence };

/// Which adapter components are replaced by their fallback variants.
struct AblationConfig {
  bool disable_isi = false;   // bypass the whole adapter
  bool disable_vesr = false;  // drop visual-enhanced sentence representation
  bool disable_srvr = false;  // drop sentence-rectified visual representation
  bool disable_isf = false;   // fusion becomes concat + linear map
  bool disable_gm = false;    // gate becomes a plain average
  bool disable_fm = false;    // filter becomes a plain average

  void validate() const;
  static AblationConfig from_name(const std::string& name);  // "full", "no-isi", ...
  std::string name() const;
};

struct AdapterConfig {
  std::size_t text_dim = 32;    // d
  std::size_t visual_dim = 32;  // d'
  std::size_t hidden = 32;      // t
  std::size_t heads = 4;        // h_a, must divide hidden
  std::size_t text_len = 24;    // l
  std::size_t visual_len = 9;   // k
  RectifyAxis rectify_axis = RectifyAxis::feature;

  std::size_t head_dim() const { return hidden / heads; }
};

struct InteractionHeadParams {
  Tensor wq, wk, wv;  // hidden x head_dim, bias-free
};

struct InteractionAttentionParams {
  std::vector<InteractionHeadParams> heads;
  Tensor wo;  // hidden x hidden
};

/// Every learnable symbol of the interaction and fusion equations. Parameter
/// presence tracks the ablation: dropped components allocate nothing.
struct AdapterParams {
  AdapterConfig cfg;
  AblationConfig ablation;

  Tensor phi;  // d x t
  Tensor psi;  // d' x t
  InteractionAttentionParams vea;  // queries from visual, keys/values from text
  InteractionAttentionParams sra;  // queries from text, keys/values from visual
  Tensor phi_int;  // (k+l) x l; l x l without VESR; k x l without SRVR

  Tensor w_alpha, b_alpha;  // 2t x 1, [1]
  Tensor w_z, b_z;          // 1 x t, [t]
  Tensor w_beta, b_beta;    // 2t x 1, [1]
  Tensor w_x, b_x;          // 1 x t, [t]
  Tensor w_g, b_g;          // 2t x 1, [1]
  Tensor w_h, b_h;          // 2t x 1, [1]
  Tensor w_r, b_r;          // t x t, [t]
  Tensor w_isf;             // 2t x t, only without ISF

  static AdapterParams init(const AdapterConfig& cfg, const AblationConfig& ablation,
                            std::uint64_t seed);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// Eq-by-eq pipeline pieces.
struct ProjectedModalities {
  Tensor text;    // l x t
  Tensor visual;  // k x t
};

ProjectedModalities project_modalities(const Tensor& x_tex, const Tensor& x_vis,
                                       const AdapterParams& params);

/// Visual queries attending over text keys/values; output k x t.
Tensor visual_enhanced_attention(const Tensor& text, const Tensor& visual,
                                 const AdapterParams& params,
                                 const std::vector<int>& text_mask,
                                 Tensor* weights_out = nullptr);

/// Text queries attending over visual keys/values; output l x t.
Tensor sentence_rectified_attention(const Tensor& text, const Tensor& visual,
                                    const AdapterParams& params,
                                    Tensor* weights_out = nullptr);

/// Sequence-axis projection of [Z_tex ; Z_vis] down to l rows.
Tensor interact(const Tensor& z_tex, const Tensor& z_vis, const AdapterParams& params);

struct RectifiedPair {
  Tensor text;         // updated semantic representation, l x t
  Tensor interaction;  // updated interaction representation, l x t
};

RectifiedPair rectify_representations(const Tensor& text, const Tensor& z_int,
                                      const AdapterParams& params);

/// Gated convex combination of the two rectified representations.
Tensor gate_merge(const Tensor& text_hat, const Tensor& int_hat,
                  const AdapterParams& params);

/// Sigmoid filter times tanh transform of the fused feature.
Tensor filter_fuse(const Tensor& fused, const Tensor& text, const AdapterParams& params);

struct AdapterTrace {
  Tensor vea_weights;  // heads x k x l
  Tensor sra_weights;  // heads x l x k
};

/// Full adapter pipeline producing the replacement R (l x t) for the bottom
/// block's attention output. Refuses to run when disable_isi is set; the
/// caller bypasses the adapter entirely in that case.
Tensor adapter_forward(const Tensor& x_embeddings, const VisualFeatures& visual,
                       const AdapterParams& params, const AblationConfig& ablation,
                       const std::vector<int>& text_mask,
                       AdapterTrace* trace = nullptr);

}  // namespace scenafuse
