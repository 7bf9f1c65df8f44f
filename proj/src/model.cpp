// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/model.hpp"

#include <stdexcept>

namespace scenafuse {

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.ablation.validate();
  Model m;
  m.cfg = cfg;
  m.encoder = EncoderParams::init(cfg.encoder, seed);
  if (!cfg.ablation.disable_isi) {
    m.adapter = AdapterParams::init(cfg.adapter_config(), cfg.ablation, seed);
  }
  return m;
}

NamedTensors Model::parameters() const {
  NamedTensors out = encoder.named();
  if (adapter.has_value()) {
    for (auto& entry : adapter->named()) out.push_back(std::move(entry));
  }
  return out;
}

Tensor Model::logits(const InputEncoding& enc, const VisualFeatures* visual,
                     const DropoutCtx& drop, ModelTrace* trace) const {
  if (!adapter.has_value()) {
    Tensor hidden = encoder_forward(enc, encoder, nullptr, drop,
                                    trace ? &trace->encoder : nullptr);
    return classify(hidden, encoder);
  }
  if (visual == nullptr) {
    throw std::invalid_argument("model: adapter is enabled but no visual features given");
  }
  Tensor embedded = embed_inputs(enc, encoder);
  Tensor replacement = adapter_forward(embedded, *visual, *adapter, cfg.ablation,
                                       enc.attention_mask,
                                       trace ? &trace->adapter : nullptr);
  // Run the stack by hand so the residual path and the adapter share the
  // same embedding nodes.
  Tensor x = embedded;
  for (std::size_t b = 0; b < encoder.blocks.size(); ++b) {
    Tensor weights;
    x = transformer_block_forward(x, encoder.blocks[b], enc.attention_mask,
                                  b == 0 ? &replacement : nullptr, drop,
                                  trace ? &weights : nullptr);
    if (trace != nullptr) trace->encoder.block_weights.push_back(weights);
  }
  return classify(x, encoder);
}

}  // namespace scenafuse
