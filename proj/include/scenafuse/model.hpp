// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "scenafuse/adapter.hpp"
#include "scenafuse/checkpoint.hpp"
#include "scenafuse/encoder.hpp"

namespace scenafuse {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t visual_blocks = 9;  // k
  std::size_t visual_dim = 32;    // d'
  std::size_t adapter_heads = 4;  // h_a
  RectifyAxis rectify_axis = RectifyAxis::feature;
  AblationConfig ablation;

  AdapterConfig adapter_config() const {
    AdapterConfig a;
    a.text_dim = encoder.d_model;
    a.visual_dim = visual_dim;
    a.hidden = encoder.d_model;  // f = t = d
    a.heads = adapter_heads;
    a.text_len = encoder.max_len;
    a.visual_len = visual_blocks;
    a.rectify_axis = rectify_axis;
    return a;
  }
};

struct ModelTrace {
  EncoderTrace encoder;
  AdapterTrace adapter;
};

/// Host encoder plus (unless the ISI ablation removes it) the scenario
/// adapter whose output overrides the bottom block's attention output.
struct Model {
  ModelConfig cfg;
  EncoderParams encoder;
  std::optional<AdapterParams> adapter;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  bool uses_adapter() const { return adapter.has_value(); }
  NamedTensors parameters() const;

  /// Per-example logits (rank-1 of 3). visual may be null only when the
  /// adapter is absent.
  Tensor logits(const InputEncoding& enc, const VisualFeatures* visual,
                const DropoutCtx& drop = {}, ModelTrace* trace = nullptr) const;
};

}  // namespace scenafuse
