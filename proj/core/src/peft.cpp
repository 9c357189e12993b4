// SPDX-License-Identifier: Apache-2.0
#include "selafd/peft.hpp"

#include <algorithm>
#include <cmath>

#include "selafd/error.hpp"

namespace selafd {

void PeftConfig::validate(std::size_t embed_dim) const {
  if (rank == 0 || rank >= embed_dim)
    throw ConfigError("LoRA rank " + std::to_string(rank) + " must satisfy 0 < r < d = " +
                      std::to_string(embed_dim));
  if (!(parallel_scale > 0.0 && parallel_scale <= 1.0))
    throw ConfigError("parallel scale must lie in (0, 1], got " + std::to_string(parallel_scale));
  if (!(bottleneck_ratio > 0.0) || bottleneck_dim(embed_dim) < 1)
    throw ConfigError("bottleneck ratio " + std::to_string(bottleneck_ratio) + " leaves no adapter units");
}

std::size_t PeftConfig::bottleneck_dim(std::size_t embed_dim) const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(embed_dim) * bottleneck_ratio));
}

LoraLayer make_lora(std::size_t d_out, std::size_t d_in, std::size_t rank, LoraTarget target, Rng& rng) {
  if (rank == 0 || rank >= std::min(d_out, d_in))
    throw ConfigError("LoRA rank " + std::to_string(rank) + " must satisfy 0 < r < d = " +
                      std::to_string(std::min(d_out, d_in)));
  LoraLayer l;
  l.a = Tensor({rank, d_in});
  for (double& v : l.a.data()) v = rng.normal(0.0, 0.02);
  l.b = Tensor::zeros({d_out, rank});
  l.target = target;
  return l;
}

Adapter make_adapter(std::size_t d, double bottleneck_ratio, AdapterPlacement placement, Rng& rng) {
  const long m = std::lround(static_cast<double>(d) * bottleneck_ratio);
  if (m < 1) throw ConfigError("adapter bottleneck must have at least one unit");
  const auto mm = static_cast<std::size_t>(m);
  Adapter a;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  a.w_down = Tensor({d, mm});
  for (double& v : a.w_down.data()) v = rng.uniform(-bound, bound);
  a.b_down = Tensor::zeros({mm});
  a.w_up = Tensor::zeros({mm, d});
  a.b_up = Tensor::zeros({d});
  a.placement = placement;
  return a;
}

Var lora_forward(Graph& g, Var x, const Tensor& w0, const Tensor* bias, const LoraLayer& lora) {
  if (lora.a.rank() != 2 || lora.b.rank() != 2 || lora.a.dim(1) != w0.dim(1) || lora.b.dim(0) != w0.dim(0) ||
      lora.a.dim(0) != lora.b.dim(1))
    throw DimensionError("LoRA factors A " + shape_string(lora.a.shape()) + ", B " +
                         shape_string(lora.b.shape()) + " do not fit W0 " + shape_string(w0.shape()));
  if (lora.rank() >= std::min(w0.dim(0), w0.dim(1)))
    throw ConfigError("LoRA rank " + std::to_string(lora.rank()) + " is not below d");
  Var base = bias ? g.linear(x, g.param(w0), g.param(*bias)) : g.linear(x, g.param(w0));
  Var down = g.linear(x, g.param(lora.a));
  Var delta = g.linear(down, g.param(lora.b));
  return g.add(base, delta);
}

Tensor lora_merge(const Tensor& w0, LoraLayer& lora) {
  if (lora.merged) throw ContractError("LoRA layer is already merged; reset it before merging again");
  Tensor merged = add_plain(w0, matmul_plain(lora.b, lora.a));
  lora.merged = true;
  return merged;
}

void reset_after_merge(LoraLayer& lora) {
  for (double& v : lora.b.data()) v = 0.0;
  lora.merged = false;
}

Var adapter_branch(Graph& g, Var h, const Adapter& ad) {
  Var down = g.add_bias(g.matmul(h, g.param(ad.w_down)), g.param(ad.b_down));
  Var up = g.matmul(g.relu(down), g.param(ad.w_up));
  return g.add_bias(up, g.param(ad.b_up));
}

Var serial_adapter_apply(Graph& g, Var h, const Adapter& ad) {
  if (ad.placement != AdapterPlacement::kSerial)
    throw ConfigError("serial_adapter_apply called with a parallel adapter");
  return g.add(h, adapter_branch(g, h, ad));
}

Var parallel_adapter_branch(Graph& g, Var h, const Adapter& ad, double scale) {
  if (ad.placement != AdapterPlacement::kParallel)
    throw ConfigError("parallel_adapter_branch called with a serial adapter");
  return g.scale(adapter_branch(g, h, ad), scale);
}

namespace {

Var project(Graph& g, Var x, const LinearWeights& w, const std::optional<LoraLayer>& lora) {
  if (lora) return lora_forward(g, x, w.weight, &w.bias, *lora);
  return g.linear(x, g.param(w.weight), g.param(w.bias));
}

}  // namespace

Var mha_forward_lora(Graph& g, Var x, const BlockWeights& w, const BlockPeft& peft, std::size_t heads,
                     std::vector<Tensor>* record) {
  Var q = project(g, x, w.query, peft.lora_query);
  Var k = g.linear(x, g.param(w.key.weight), g.param(w.key.bias));
  Var v = project(g, x, w.value, peft.lora_value);
  Var heads_out = attention_heads(g, q, k, v, heads, record);
  return g.linear(heads_out, g.param(w.out.weight), g.param(w.out.bias));
}

Var selafd_block_forward(Graph& g, Var x, const BlockWeights& w, const BlockPeft& peft, double scale,
                         const VitConfig& c, std::vector<Tensor>* record) {
  Var n1 = g.layer_norm(x, g.param(w.ln1.gamma), g.param(w.ln1.beta), c.ln_eps);
  Var attn = mha_forward_lora(g, n1, w, peft, c.heads, record);
  if (peft.serial) attn = serial_adapter_apply(g, attn, *peft.serial);
  Var x1 = g.add(attn, x);
  Var n2 = g.layer_norm(x1, g.param(w.ln2.gamma), g.param(w.ln2.beta), c.ln_eps);
  Var mlp = mlp_forward(g, n2, w);
  if (peft.parallel) mlp = g.add(mlp, parallel_adapter_branch(g, n2, *peft.parallel, scale));
  return g.add(mlp, x1);
}

}  // namespace selafd
