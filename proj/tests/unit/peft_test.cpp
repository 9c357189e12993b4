// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "selafd/error.hpp"
#include "selafd/peft.hpp"

namespace selafd {
namespace {

using testing::random_tensor;

TEST(Lora, ShapesAndZeroB) {
  Rng rng(1);
  const LoraLayer l = make_lora(64, 64, 8, LoraTarget::kQuery, rng);
  EXPECT_EQ(l.a.shape(), (Shape{8, 64}));
  EXPECT_EQ(l.b.shape(), (Shape{64, 8}));
  for (double v : l.b.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(l.rank(), 8u);
}

TEST(Lora, RankBounds) {
  Rng rng(1);
  EXPECT_THROW(make_lora(8, 8, 8, LoraTarget::kValue, rng), ConfigError);
  EXPECT_THROW(make_lora(8, 8, 0, LoraTarget::kValue, rng), ConfigError);
  EXPECT_NO_THROW(make_lora(8, 8, 7, LoraTarget::kValue, rng));
}

TEST(Lora, ZeroInitEqualsFrozenProjection) {
  Rng rng(2);
  const Tensor w0 = random_tensor({16, 16}, rng), bias = random_tensor({16}, rng), x = random_tensor({5, 16}, rng);
  const LoraLayer l = make_lora(16, 16, 4, LoraTarget::kQuery, rng);
  Graph g;
  const Var xin = g.input(x);
  const Tensor& with = g.value(lora_forward(g, xin, w0, &bias, l));
  const Tensor& plain = g.value(g.linear(xin, g.param(w0), g.param(bias)));
  EXPECT_EQ(with, plain);
}

TEST(Lora, MergeEquivalenceOverRandomDraws) {
  Rng rng(3);
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t d = 4 + rng.below(61);
    const std::size_t r = 1 + rng.below(std::min<std::size_t>(d - 1, 8));
    const Tensor w0 = random_tensor({d, d}, rng);
    LoraLayer l = make_lora(d, d, r, LoraTarget::kValue, rng);
    l.b = random_tensor({d, r}, rng, 0.1);
    const Tensor x = random_tensor({3, d}, rng);
    Graph g;
    const Tensor y = g.value(lora_forward(g, g.input(x), w0, nullptr, l));
    const Tensor merged = lora_merge(w0, l);
    const Tensor ref = matmul_plain(x, transpose_plain(merged));
    worst = std::max(worst, max_abs_diff(y, ref));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Lora, DoubleMergeIsAContractError) {
  Rng rng(4);
  const Tensor w0 = random_tensor({8, 8}, rng);
  LoraLayer l = make_lora(8, 8, 2, LoraTarget::kQuery, rng);
  lora_merge(w0, l);
  EXPECT_TRUE(l.merged);
  EXPECT_THROW(lora_merge(w0, l), ContractError);
  reset_after_merge(l);
  EXPECT_FALSE(l.merged);
  for (double v : l.b.data()) EXPECT_EQ(v, 0.0);
  EXPECT_NO_THROW(lora_merge(w0, l));
}

TEST(Adapter, BottleneckShapesAndZeroUp) {
  Rng rng(5);
  const Adapter a = make_adapter(64, 0.5, AdapterPlacement::kSerial, rng);
  EXPECT_EQ(a.w_down.shape(), (Shape{64, 32}));
  EXPECT_EQ(a.w_up.shape(), (Shape{32, 64}));
  EXPECT_EQ(a.bottleneck(), 32u);
  for (double v : a.w_up.data()) EXPECT_EQ(v, 0.0);
  // 2*64*32 + 32 + 64 = 4192
  EXPECT_EQ(a.w_down.size() + a.b_down.size() + a.w_up.size() + a.b_up.size(), 4192u);
}

TEST(Adapter, SerialIsIdentityAtInit) {
  Rng rng(6);
  const Adapter a = make_adapter(16, 0.5, AdapterPlacement::kSerial, rng);
  const Tensor h = random_tensor({7, 16}, rng);
  Graph g;
  EXPECT_EQ(g.value(serial_adapter_apply(g, g.input(h), a)), h);
}

TEST(Adapter, ParallelBranchScalesLinearly) {
  Rng rng(7);
  Adapter a = make_adapter(16, 0.5, AdapterPlacement::kParallel, rng);
  a.w_up = random_tensor({8, 16}, rng);
  a.b_up = random_tensor({16}, rng);
  const Tensor h = random_tensor({4, 16}, rng);
  Graph g;
  const Var in = g.input(h);
  const Tensor one = g.value(parallel_adapter_branch(g, in, a, 1.0));
  for (double s : {0.0, 0.5, 1.0}) {
    const Tensor& y = g.value(parallel_adapter_branch(g, in, a, s));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], s * one[i], 1e-15);
  }
}

TEST(Adapter, PlacementIsChecked) {
  Rng rng(8);
  const Adapter serial = make_adapter(16, 0.5, AdapterPlacement::kSerial, rng);
  const Adapter parallel = make_adapter(16, 0.5, AdapterPlacement::kParallel, rng);
  Graph g;
  const Var h = g.input(Tensor({2, 16}));
  EXPECT_THROW(parallel_adapter_branch(g, h, serial, 0.2), ConfigError);
  EXPECT_THROW(serial_adapter_apply(g, h, parallel), ConfigError);
}

TEST(PeftConfig, Validation) {
  PeftConfig p;
  EXPECT_NO_THROW(p.validate(64));
  EXPECT_EQ(p.bottleneck_dim(64), 32u);
  p.parallel_scale = 0.0;
  EXPECT_THROW(p.validate(64), ConfigError);
  p = PeftConfig{};
  p.rank = 64;
  EXPECT_THROW(p.validate(64), ConfigError);
  p = PeftConfig{};
  p.bottleneck_ratio = 0.001;
  EXPECT_THROW(p.validate(64), ConfigError);
}

BlockWeights random_block(std::size_t d, std::size_t mlp, Rng& rng) {
  auto lin = [&](std::size_t out, std::size_t in) {
    return LinearWeights{random_tensor({out, in}, rng, 0.3), random_tensor({out}, rng, 0.1)};
  };
  auto norm = [&] { return LayerNormWeights{random_tensor({d}, rng, 0.2), random_tensor({d}, rng, 0.1)}; };
  BlockWeights w;
  w.ln1 = norm();
  w.query = lin(d, d);
  w.key = lin(d, d);
  w.value = lin(d, d);
  w.out = lin(d, d);
  w.ln2 = norm();
  w.fc1 = lin(mlp, d);
  w.fc2 = lin(d, mlp);
  for (double& v : w.ln1.gamma.data()) v += 1.0;
  for (double& v : w.ln2.gamma.data()) v += 1.0;
  return w;
}

TEST(SelafdBlock, EmptyPeftMatchesPlainBlock) {
  VitConfig c = VitConfig::tiny();
  c.embed_dim = 16;
  c.heads = 2;
  Rng rng(9);
  const BlockWeights w = random_block(16, 64, rng);
  const Tensor x = random_tensor({5, 16}, rng);
  Graph g;
  const Var in = g.input(x);
  EXPECT_EQ(g.value(selafd_block_forward(g, in, w, BlockPeft{}, 0.2, c)), g.value(block_forward(g, in, w, c)));
}

TEST(SelafdBlock, ZeroInitModulesMatchPlainBlock) {
  VitConfig c = VitConfig::tiny();
  c.embed_dim = 16;
  c.heads = 2;
  Rng rng(10);
  const BlockWeights w = random_block(16, 64, rng);
  BlockPeft p;
  p.lora_query = make_lora(16, 16, 4, LoraTarget::kQuery, rng);
  p.lora_value = make_lora(16, 16, 4, LoraTarget::kValue, rng);
  p.serial = make_adapter(16, 0.5, AdapterPlacement::kSerial, rng);
  p.parallel = make_adapter(16, 0.5, AdapterPlacement::kParallel, rng);
  const Tensor x = random_tensor({5, 16}, rng);
  Graph g;
  const Var in = g.input(x);
  EXPECT_EQ(g.value(selafd_block_forward(g, in, w, p, 0.2, c)), g.value(block_forward(g, in, w, c)));
}

}  // namespace
}  // namespace selafd
