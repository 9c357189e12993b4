// SPDX-License-Identifier: Apache-2.0
#include "selafd/vit.hpp"

#include <cmath>

#include "selafd/error.hpp"

namespace selafd {

VitConfig VitConfig::tiny(std::size_t num_classes) {
  VitConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 64;
  c.depth = 4;
  c.heads = 4;
  c.num_classes = num_classes;
  return c;
}

VitConfig VitConfig::vit_b16(std::size_t num_classes) {
  VitConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.num_classes = num_classes;
  return c;
}

void VitConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  if (depth == 0) throw ConfigError("depth must be at least 1");
  if (channels == 0 || mlp_ratio == 0) throw ConfigError("channels and mlp_ratio must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
}

namespace {

template <class Weights, class Fn>
void visit_weights(Weights& w, Fn&& fn) {
  fn("patch_embed.weight", w.patch_weight);
  fn("patch_embed.bias", w.patch_bias);
  fn("cls_token", w.cls_token);
  fn("pos_embed", w.pos_embed);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    fn(p + "ln1.gamma", b.ln1.gamma);
    fn(p + "ln1.beta", b.ln1.beta);
    fn(p + "attn.query.weight", b.query.weight);
    fn(p + "attn.query.bias", b.query.bias);
    fn(p + "attn.key.weight", b.key.weight);
    fn(p + "attn.key.bias", b.key.bias);
    fn(p + "attn.value.weight", b.value.weight);
    fn(p + "attn.value.bias", b.value.bias);
    fn(p + "attn.out.weight", b.out.weight);
    fn(p + "attn.out.bias", b.out.bias);
    fn(p + "ln2.gamma", b.ln2.gamma);
    fn(p + "ln2.beta", b.ln2.beta);
    fn(p + "mlp.fc1.weight", b.fc1.weight);
    fn(p + "mlp.fc1.bias", b.fc1.bias);
    fn(p + "mlp.fc2.weight", b.fc2.weight);
    fn(p + "mlp.fc2.bias", b.fc2.bias);
  }
  fn("norm.gamma", w.final_norm.gamma);
  fn("norm.beta", w.final_norm.beta);
  fn("head.weight", w.head.weight);
  fn("head.bias", w.head.bias);
}

}  // namespace

std::vector<ParamSpec> vit_layout(const VitConfig& c) {
  c.validate();
  const std::size_t d = c.embed_dim;
  std::vector<ParamSpec> out = {
      {"patch_embed.weight", {d, c.patch_dim()}},
      {"patch_embed.bias", {d}},
      {"cls_token", {1, d}},
      {"pos_embed", {c.seq_len(), d}},
  };
  for (std::size_t i = 0; i < c.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    for (const char* ln : {"ln1"}) {
      out.push_back({p + ln + ".gamma", {d}});
      out.push_back({p + ln + ".beta", {d}});
    }
    for (const char* proj : {"query", "key", "value", "out"}) {
      out.push_back({p + "attn." + proj + ".weight", {d, d}});
      out.push_back({p + "attn." + proj + ".bias", {d}});
    }
    out.push_back({p + "ln2.gamma", {d}});
    out.push_back({p + "ln2.beta", {d}});
    out.push_back({p + "mlp.fc1.weight", {c.mlp_dim(), d}});
    out.push_back({p + "mlp.fc1.bias", {c.mlp_dim()}});
    out.push_back({p + "mlp.fc2.weight", {d, c.mlp_dim()}});
    out.push_back({p + "mlp.fc2.bias", {d}});
  }
  out.push_back({"norm.gamma", {d}});
  out.push_back({"norm.beta", {d}});
  out.push_back({"head.weight", {c.num_classes, d}});
  out.push_back({"head.bias", {c.num_classes}});
  return out;
}

void for_each_weight(VitWeights& weights, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_weights(weights, fn);
}

void for_each_weight(const VitWeights& weights,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_weights(weights, fn);
}

namespace {

Tensor trunc_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.truncated_normal(0.02);
  return t;
}

LinearWeights init_linear(std::size_t out, std::size_t in, Rng& rng) {
  return {trunc_normal({out, in}, rng), Tensor::zeros({out})};
}

LayerNormWeights init_norm(std::size_t d) { return {Tensor::ones({d}), Tensor::zeros({d})}; }

}  // namespace

LinearWeights init_head(std::size_t num_classes, std::size_t embed_dim, Rng& rng) {
  return init_linear(num_classes, embed_dim, rng);
}

VitWeights init_vit(const VitConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.embed_dim;
  VitWeights w;
  w.patch_weight = trunc_normal({d, c.patch_dim()}, rng);
  w.patch_bias = Tensor::zeros({d});
  w.cls_token = Tensor::zeros({1, d});
  w.pos_embed = trunc_normal({c.seq_len(), d}, rng);
  w.blocks.resize(c.depth);
  for (auto& b : w.blocks) {
    b.ln1 = init_norm(d);
    b.query = init_linear(d, d, rng);
    b.key = init_linear(d, d, rng);
    b.value = init_linear(d, d, rng);
    b.out = init_linear(d, d, rng);
    b.ln2 = init_norm(d);
    b.fc1 = init_linear(c.mlp_dim(), d, rng);
    b.fc2 = init_linear(d, c.mlp_dim(), rng);
  }
  w.final_norm = init_norm(d);
  w.head = init_linear(c.num_classes, d, rng);
  return w;
}

void check_complete(const VitWeights& weights, const VitConfig& config) {
  config.validate();
  if (weights.blocks.size() != config.depth)
    throw ConfigError("model has " + std::to_string(weights.blocks.size()) + " blocks, config expects " +
                      std::to_string(config.depth));
  const auto layout = vit_layout(config);
  std::size_t i = 0;
  for_each_weight(weights, [&](const std::string& name, const Tensor& t) {
    if (t.empty()) throw ConfigError("model is incomplete: missing weight " + name);
    if (t.shape() != layout[i].shape)
      throw ConfigError("weight " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(layout[i].shape));
    ++i;
  });
}

Tensor patchify(const Tensor& image, const VitConfig& c) {
  const std::size_t size = c.image_size;
  if (image.rank() != 3 || image.dim(0) != c.channels || image.dim(1) != size || image.dim(2) != size)
    throw DimensionError("image " + shape_string(image.shape()) + " does not match expected " +
                         shape_string({c.channels, size, size}));
  const std::size_t p = c.patch_size;
  const std::size_t grid = c.grid();
  Tensor out({c.num_patches(), c.patch_dim()});
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      double* row = out.data().data() + (gy * grid + gx) * c.patch_dim();
      std::size_t k = 0;
      for (std::size_t ch = 0; ch < c.channels; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            row[k++] = image[(ch * size + gy * p + y) * size + gx * p + x];
    }
  }
  return out;
}

Var patch_embed(Graph& g, const Tensor& image, const VitWeights& w, const VitConfig& c) {
  Var patches = g.input(patchify(image, c));
  Var tokens = g.linear(patches, g.param(w.patch_weight), g.param(w.patch_bias));
  const Var parts[] = {g.param(w.cls_token), tokens};
  Var seq = g.concat_rows(parts);
  return g.add(seq, g.param(w.pos_embed));
}

Var attention_heads(Graph& g, Var q, Var k, Var v, std::size_t heads, std::vector<Tensor>* record) {
  const std::size_t d = g.value(q).dim(1);
  if (heads == 0 || d % heads != 0)
    throw DimensionError("width " + std::to_string(d) + " is not divisible into " + std::to_string(heads) +
                         " heads");
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = g.slice_cols(q, h * hd, hd);
    Var kh = g.slice_cols(k, h * hd, hd);
    Var vh = g.slice_cols(v, h * hd, hd);
    Var scores = g.scale(g.matmul(qh, g.transpose(kh)), scale);
    Var probs = g.softmax(scores, 1);
    if (record) record->push_back(g.value(probs));
    outs.push_back(g.matmul(probs, vh));
  }
  return g.concat_cols(outs);
}

Var mha_forward(Graph& g, Var x, const BlockWeights& w, std::size_t heads, std::vector<Tensor>* record) {
  Var q = g.linear(x, g.param(w.query.weight), g.param(w.query.bias));
  Var k = g.linear(x, g.param(w.key.weight), g.param(w.key.bias));
  Var v = g.linear(x, g.param(w.value.weight), g.param(w.value.bias));
  Var heads_out = attention_heads(g, q, k, v, heads, record);
  return g.linear(heads_out, g.param(w.out.weight), g.param(w.out.bias));
}

Var mlp_forward(Graph& g, Var x, const BlockWeights& w) {
  Var hidden = g.gelu(g.linear(x, g.param(w.fc1.weight), g.param(w.fc1.bias)));
  return g.linear(hidden, g.param(w.fc2.weight), g.param(w.fc2.bias));
}

Var block_forward(Graph& g, Var x, const BlockWeights& w, const VitConfig& c, std::vector<Tensor>* record) {
  Var n1 = g.layer_norm(x, g.param(w.ln1.gamma), g.param(w.ln1.beta), c.ln_eps);
  Var x1 = g.add(mha_forward(g, n1, w, c.heads, record), x);
  Var n2 = g.layer_norm(x1, g.param(w.ln2.gamma), g.param(w.ln2.beta), c.ln_eps);
  return g.add(mlp_forward(g, n2, w), x1);
}

Var head_forward(Graph& g, Var tokens, const VitWeights& w, const VitConfig& c) {
  Var cls = g.row(tokens, 0);
  Var normed = g.layer_norm(cls, g.param(w.final_norm.gamma), g.param(w.final_norm.beta), c.ln_eps);
  return g.linear(normed, g.param(w.head.weight), g.param(w.head.bias));
}

Var vit_logits(Graph& g, const Tensor& image, const VitWeights& w, const VitConfig& c, AttentionRecord* record) {
  Var x = patch_embed(g, image, w, c);
  for (const auto& block : w.blocks) {
    std::vector<Tensor>* layer = nullptr;
    if (record) layer = &record->layers.emplace_back();
    x = block_forward(g, x, block, c, layer);
  }
  return head_forward(g, x, w, c);
}

Tensor classify(const Tensor& image, const VitWeights& weights, const VitConfig& config) {
  check_complete(weights, config);
  Graph g;
  Var logits = vit_logits(g, image, weights, config);
  return g.value(logits).reshaped({config.num_classes});
}

}  // namespace selafd
