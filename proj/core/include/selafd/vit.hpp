// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "selafd/graph.hpp"
#include "selafd/random.hpp"
#include "selafd/tensor.hpp"

namespace selafd {

struct VitConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 6;
  double ln_eps = 1e-6;

  /// image 32, patch 8, d=64, depth 4, heads 4: the canonical test model.
  static VitConfig tiny(std::size_t num_classes = 6);
  /// image 224, patch 16, d=768, depth 12, heads 12, mlp_ratio 4.
  static VitConfig vit_b16(std::size_t num_classes = 6);

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_dim() const { return embed_dim * mlp_ratio; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }

  /// Throws ConfigError when a structural invariant fails.
  void validate() const;

  friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

/// Output-major dense layer: y = x W^T + b with W [out x in].
struct LinearWeights {
  Tensor weight;
  Tensor bias;
};

struct LayerNormWeights {
  Tensor gamma;
  Tensor beta;
};

struct BlockWeights {
  LayerNormWeights ln1;
  LinearWeights query;
  LinearWeights key;
  LinearWeights value;
  LinearWeights out;
  LayerNormWeights ln2;
  LinearWeights fc1;
  LinearWeights fc2;
};

/// Backbone plus classification head.
struct VitWeights {
  Tensor patch_weight;  // [d x patch_dim]
  Tensor patch_bias;    // [d]
  Tensor cls_token;     // [1 x d]
  Tensor pos_embed;     // [(N+1) x d]
  std::vector<BlockWeights> blocks;
  LayerNormWeights final_norm;
  LinearWeights head;   // [num_classes x d]
};

/// Name and shape of one weight, in registration order.
struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Weight layout implied by a config, without allocating anything.
/// Names are relative ("blocks.0.attn.query.weight"); head entries start
/// with "head.".
std::vector<ParamSpec> vit_layout(const VitConfig& config);

/// Visits every weight in vit_layout() order.
void for_each_weight(VitWeights& weights, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_weight(const VitWeights& weights,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

/// Truncated-normal(0.02) matrices and position embeddings, zero biases,
/// zero class token, unit LayerNorm gains.
VitWeights init_vit(const VitConfig& config, Rng& rng);

/// Fresh zero-bias head of `num_classes` rows, truncated-normal(0.02).
LinearWeights init_head(std::size_t num_classes, std::size_t embed_dim, Rng& rng);

/// Per-head attention probabilities kept for inspection, [layer][head]
/// each [(N+1) x (N+1)].
struct AttentionRecord {
  std::vector<std::vector<Tensor>> layers;
};

/// Rearranges a [C x H x W] image into [N x C*p*p] rows, patches in
/// row-major grid order, each flattened channel-major.
Tensor patchify(const Tensor& image, const VitConfig& config);

/// Linear patch projection, class token prepended, position embeddings
/// added: returns [(N+1) x d].
Var patch_embed(Graph& g, const Tensor& image, const VitWeights& weights, const VitConfig& config);

/// Scaled dot-product attention over pre-projected q, k, v [T x d]; heads
/// are column slices. Returns concatenated head outputs [T x d] (before the
/// output projection). When `record` is set, each head's probability
/// matrix is appended to it.
Var attention_heads(Graph& g, Var q, Var k, Var v, std::size_t heads, std::vector<Tensor>* record);

/// Full multi-head attention including the output projection.
Var mha_forward(Graph& g, Var x, const BlockWeights& w, std::size_t heads,
                std::vector<Tensor>* record = nullptr);

/// GELU MLP: fc2(gelu(fc1(x))).
Var mlp_forward(Graph& g, Var x, const BlockWeights& w);

/// Pre-norm block: x' = MHA(LN(x)) + x; out = MLP(LN(x')) + x'.
Var block_forward(Graph& g, Var x, const BlockWeights& w, const VitConfig& config,
                  std::vector<Tensor>* record = nullptr);

/// Final LayerNorm on the class token followed by the head: [1 x classes].
Var head_forward(Graph& g, Var tokens, const VitWeights& weights, const VitConfig& config);

/// End-to-end logits [1 x num_classes] for the plain backbone.
Var vit_logits(Graph& g, const Tensor& image, const VitWeights& weights, const VitConfig& config,
               AttentionRecord* record = nullptr);

/// Inference convenience: logits as a [num_classes] tensor. Throws
/// ConfigError when the weights do not match the config.
Tensor classify(const Tensor& image, const VitWeights& weights, const VitConfig& config);

/// Throws ConfigError if any weight is missing or mis-shaped for `config`.
void check_complete(const VitWeights& weights, const VitConfig& config);

}  // namespace selafd
