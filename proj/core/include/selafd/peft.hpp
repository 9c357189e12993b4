// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "selafd/graph.hpp"
#include "selafd/random.hpp"
#include "selafd/vit.hpp"

namespace selafd {

enum class LoraTarget { kQuery, kValue };
enum class AdapterPlacement { kSerial, kParallel };

struct PeftConfig {
  std::size_t rank = 8;
  double bottleneck_ratio = 0.5;
  double parallel_scale = 0.2;
  bool lora_query = true;
  bool lora_value = true;

  /// Checks 0 < rank < embed_dim, scale in (0, 1], and a bottleneck of at
  /// least one unit.
  void validate(std::size_t embed_dim) const;
  std::size_t bottleneck_dim(std::size_t embed_dim) const;

  friend bool operator==(const PeftConfig&, const PeftConfig&) = default;
};

/// Low-rank update BA beside a frozen projection W0. A is [r x d_in],
/// B is [d_out x r]; B starts at zero so the wrapped projection initially
/// equals W0. No alpha/r scaling is applied.
struct LoraLayer {
  Tensor a;
  Tensor b;
  LoraTarget target = LoraTarget::kQuery;
  bool merged = false;

  std::size_t rank() const { return a.dim(0); }
};

/// Bottleneck adapter: up(ReLU(down(h))). W_down is [d x m] and W_up is
/// [m x d], applied to row features as h W_down; W_up and b_up start at
/// zero so the branch output is initially zero.
struct Adapter {
  Tensor w_down;
  Tensor b_down;
  Tensor w_up;
  Tensor b_up;
  AdapterPlacement placement = AdapterPlacement::kSerial;

  std::size_t bottleneck() const { return w_down.dim(1); }
};

/// Throws ConfigError when rank >= d or rank == 0.
LoraLayer make_lora(std::size_t d_out, std::size_t d_in, std::size_t rank, LoraTarget target, Rng& rng);
Adapter make_adapter(std::size_t d, double bottleneck_ratio, AdapterPlacement placement, Rng& rng);

/// x W0^T (+ bias) + (x A^T) B^T for row features x [T x d_in].
Var lora_forward(Graph& g, Var x, const Tensor& w0, const Tensor* bias, const LoraLayer& lora);

/// W0 + B A. Marks the layer merged; merging an already merged layer
/// throws ContractError until reset_after_merge() re-zeroes B.
Tensor lora_merge(const Tensor& w0, LoraLayer& lora);
void reset_after_merge(LoraLayer& lora);

/// up(ReLU(down(h))) without the skip.
Var adapter_branch(Graph& g, Var h, const Adapter& adapter);
/// h + up(ReLU(down(h))); throws ConfigError unless placement is serial.
Var serial_adapter_apply(Graph& g, Var h, const Adapter& adapter);
/// Same scaled-branch contract for parallel placement; throws otherwise.
Var parallel_adapter_branch(Graph& g, Var h, const Adapter& adapter, double scale);

struct BlockPeft {
  std::optional<LoraLayer> lora_query;
  std::optional<LoraLayer> lora_value;
  std::optional<Adapter> serial;
  std::optional<Adapter> parallel;
};

/// Multi-head attention with optional LoRA on the query and value
/// projections; the output projection W^O stays plain.
Var mha_forward_lora(Graph& g, Var x, const BlockWeights& w, const BlockPeft& peft, std::size_t heads,
                     std::vector<Tensor>* record = nullptr);

/// x' = Serial(MHA_lora(LN(x))) + x
/// out = MLP(LN(x')) + s * Parallel(LN(x')) + x'
/// Absent PEFT pieces fall back to the plain path, so an empty BlockPeft
/// reproduces block_forward() exactly.
Var selafd_block_forward(Graph& g, Var x, const BlockWeights& w, const BlockPeft& peft, double scale,
                         const VitConfig& config, std::vector<Tensor>* record = nullptr);

}  // namespace selafd
