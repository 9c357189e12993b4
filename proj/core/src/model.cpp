// SPDX-License-Identifier: Apache-2.0
#include "selafd/model.hpp"

#include "selafd/error.hpp"
#include "selafd/hash.hpp"

namespace selafd {

const std::vector<FineTuneMode>& all_modes() {
  static const std::vector<FineTuneMode> modes = {FineTuneMode::kSelafd, FineTuneMode::kLoraOnly,
                                                  FineTuneMode::kAdapterOnly, FineTuneMode::kLinear,
                                                  FineTuneMode::kFull};
  return modes;
}

std::string_view mode_name(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::kSelafd: return "selafd";
    case FineTuneMode::kLoraOnly: return "lora_only";
    case FineTuneMode::kAdapterOnly: return "adapter_only";
    case FineTuneMode::kLinear: return "linear";
    case FineTuneMode::kFull: return "full";
  }
  return "?";
}

FineTuneMode parse_mode(std::string_view name) {
  for (FineTuneMode m : all_modes())
    if (mode_name(m) == name) return m;
  throw InputError("unknown mode '" + std::string(name) +
                   "'; valid modes: selafd, lora_only, adapter_only, linear, full");
}

bool mode_uses_lora(FineTuneMode mode) {
  return mode == FineTuneMode::kSelafd || mode == FineTuneMode::kLoraOnly;
}

bool mode_uses_adapters(FineTuneMode mode) {
  return mode == FineTuneMode::kSelafd || mode == FineTuneMode::kAdapterOnly;
}

namespace {

std::string block_prefix(std::size_t i) { return "peft/blocks." + std::to_string(i) + "."; }

template <class Peft, class Fn>
void visit_peft(Peft& blocks, Fn&& fn) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& b = blocks[i];
    const std::string p = block_prefix(i);
    if (b.lora_query) {
      fn(p + "lora_q.A", b.lora_query->a);
      fn(p + "lora_q.B", b.lora_query->b);
    }
    if (b.lora_value) {
      fn(p + "lora_v.A", b.lora_value->a);
      fn(p + "lora_v.B", b.lora_value->b);
    }
    for (auto* ad : {&b.serial, &b.parallel}) {
      if (!*ad) continue;
      const std::string q = p + ((*ad)->placement == AdapterPlacement::kSerial ? "serial." : "parallel.");
      fn(q + "w_down", (*ad)->w_down);
      fn(q + "b_down", (*ad)->b_down);
      fn(q + "w_up", (*ad)->w_up);
      fn(q + "b_up", (*ad)->b_up);
    }
  }
}

std::string qualified(const std::string& vit_name) {
  if (vit_name.rfind("head.", 0) == 0) return "head/" + vit_name.substr(5);
  return "backbone/" + vit_name;
}

}  // namespace

std::vector<ParamEntry> model_layout(const VitConfig& vit, const PeftConfig& peft, FineTuneMode mode) {
  std::vector<ParamEntry> out;
  const bool full = mode == FineTuneMode::kFull;
  for (const auto& spec : vit_layout(vit)) {
    std::string name = qualified(spec.name);
    const bool head = name.rfind("head/", 0) == 0;
    out.push_back({std::move(name), spec.shape, full || head});
  }
  if (mode_uses_lora(mode) || mode_uses_adapters(mode)) peft.validate(vit.embed_dim);
  const std::size_t d = vit.embed_dim;
  const std::size_t m = peft.bottleneck_dim(d);
  for (std::size_t i = 0; i < vit.depth; ++i) {
    const std::string p = block_prefix(i);
    if (mode_uses_lora(mode)) {
      if (peft.lora_query) {
        out.push_back({p + "lora_q.A", {peft.rank, d}, true});
        out.push_back({p + "lora_q.B", {d, peft.rank}, true});
      }
      if (peft.lora_value) {
        out.push_back({p + "lora_v.A", {peft.rank, d}, true});
        out.push_back({p + "lora_v.B", {d, peft.rank}, true});
      }
    }
    if (mode_uses_adapters(mode)) {
      for (const char* place : {"serial.", "parallel."}) {
        out.push_back({p + place + "w_down", {d, m}, true});
        out.push_back({p + place + "b_down", {m}, true});
        out.push_back({p + place + "w_up", {m, d}, true});
        out.push_back({p + place + "b_up", {d}, true});
      }
    }
  }
  return out;
}

ParameterCount count_parameters(const std::vector<ParamEntry>& layout) {
  ParameterCount c;
  for (const auto& e : layout) {
    const std::size_t n = shape_size(e.shape);
    c.total += n;
    if (!e.trainable) continue;
    c.trainable += n;
    if (e.name.find(".lora_") != std::string::npos) c.lora += n;
    if (e.name.find(".serial.") != std::string::npos || e.name.find(".parallel.") != std::string::npos)
      c.adapter += n;
    if (e.name.rfind("head/", 0) == 0) c.head += n;
  }
  return c;
}

SelafdModel::SelafdModel(VitConfig config, VitWeights backbone, PeftConfig peft, FineTuneMode mode,
                         std::uint64_t seed)
    : config_(config), backbone_(std::move(backbone)), peft_(peft), mode_(mode) {
  check_complete(backbone_, config_);
  if (mode_uses_lora(mode_) || mode_uses_adapters(mode_)) peft_.validate(config_.embed_dim);
  Rng rng(derive_seed(seed, 0x9e7f));
  const std::size_t d = config_.embed_dim;
  peft_blocks_.resize(config_.depth);
  for (auto& b : peft_blocks_) {
    if (mode_uses_lora(mode_)) {
      if (peft_.lora_query) b.lora_query = make_lora(d, d, peft_.rank, LoraTarget::kQuery, rng);
      if (peft_.lora_value) b.lora_value = make_lora(d, d, peft_.rank, LoraTarget::kValue, rng);
    }
    if (mode_uses_adapters(mode_)) {
      b.serial = make_adapter(d, peft_.bottleneck_ratio, AdapterPlacement::kSerial, rng);
      b.parallel = make_adapter(d, peft_.bottleneck_ratio, AdapterPlacement::kParallel, rng);
    }
  }
  if (mode_ == FineTuneMode::kFull) {
    for_each_param([](const std::string&, Tensor& t) { t.set_requires_grad(true); });
  } else {
    freeze_backbone(*this);
  }
}

void SelafdModel::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each_weight(backbone_, [&](const std::string& name, Tensor& t) { fn(qualified(name), t); });
  visit_peft(peft_blocks_, fn);
}

void SelafdModel::for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for_each_weight(backbone_, [&](const std::string& name, const Tensor& t) { fn(qualified(name), t); });
  visit_peft(peft_blocks_, fn);
}

std::vector<Tensor*> SelafdModel::trainable_params() {
  std::vector<Tensor*> out;
  for_each_param([&](const std::string&, Tensor& t) {
    if (t.requires_grad()) out.push_back(&t);
  });
  return out;
}

std::vector<ParamEntry> SelafdModel::registered_params() const {
  std::vector<ParamEntry> out;
  for_each_param([&](const std::string& name, const Tensor& t) { out.push_back({name, t.shape(), t.requires_grad()}); });
  return out;
}

void SelafdModel::zero_grad() {
  for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
}

Var SelafdModel::logits(Graph& g, const Tensor& image, AttentionRecord* record) const {
  Var x = patch_embed(g, image, backbone_, config_);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    std::vector<Tensor>* layer = nullptr;
    if (record) layer = &record->layers.emplace_back();
    x = selafd_block_forward(g, x, backbone_.blocks[i], peft_blocks_[i], peft_.parallel_scale, config_, layer);
  }
  return head_forward(g, x, backbone_, config_);
}

Tensor SelafdModel::predict_logits(const Tensor& image) const {
  Graph g;
  Var out = logits(g, image);
  return g.value(out).reshaped({config_.num_classes});
}

void freeze_backbone(SelafdModel& model) {
  model.for_each_param([](const std::string& name, Tensor& t) {
    t.set_requires_grad(name.rfind("backbone/", 0) != 0);
  });
}

std::string frozen_hash(const SelafdModel& model) {
  Fnv1a h;
  model.for_each_param([&](const std::string& name, const Tensor& t) {
    if (t.requires_grad()) return;
    h.update(name);
    h.update(t.data());
  });
  return h.hex();
}

}  // namespace selafd
