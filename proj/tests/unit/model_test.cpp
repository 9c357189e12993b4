// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "selafd/checkpoint.hpp"
#include "selafd/error.hpp"
#include "selafd/model.hpp"

namespace selafd {
namespace {

using testing::random_tensor;

SelafdModel tiny_model(FineTuneMode mode, std::uint64_t seed = 1) {
  Rng rng(seed);
  const VitConfig c = VitConfig::tiny();
  return SelafdModel(c, init_vit(c, rng), PeftConfig{}, mode, seed);
}

TEST(Modes, NamesRoundTrip) {
  EXPECT_EQ(all_modes().size(), 5u);
  for (FineTuneMode m : all_modes()) EXPECT_EQ(parse_mode(mode_name(m)), m);
  try {
    parse_mode("half");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("lora_only"), std::string::npos);
  }
}

TEST(ParameterCount, VitB16LoraQueryValue) {
  const auto count = count_parameters(model_layout(VitConfig::vit_b16(), PeftConfig{}, FineTuneMode::kLoraOnly));
  EXPECT_EQ(count.lora, 294'912u);
  EXPECT_EQ(count.lora, 12u * 2u * (8u * 768u + 768u * 8u));
  EXPECT_EQ(count.adapter, 0u);
}

TEST(ParameterCount, LinearModeTrainsHeadOnly) {
  for (std::size_t classes : {2u, 6u, 10u}) {
    const auto count =
        count_parameters(model_layout(VitConfig::vit_b16(classes), PeftConfig{}, FineTuneMode::kLinear));
    EXPECT_EQ(count.trainable, classes * 768u + classes);
    EXPECT_EQ(count.head, classes * 768u + classes);
  }
}

TEST(ParameterCount, TinySelafd) {
  const auto count = count_parameters(model_layout(VitConfig::tiny(), PeftConfig{}, FineTuneMode::kSelafd));
  EXPECT_EQ(count.adapter, 33'536u);
  EXPECT_EQ(count.lora, 8'192u);
  EXPECT_EQ(count.trainable, 33'536u + 8'192u + 390u);
  const auto full = count_parameters(model_layout(VitConfig::tiny(), PeftConfig{}, FineTuneMode::kFull));
  EXPECT_EQ(full.trainable, full.total);
}

TEST(ParameterCount, LayoutMatchesAllocatedModel) {
  for (FineTuneMode m : all_modes()) {
    const SelafdModel model = tiny_model(m);
    const auto a = model.count_trainable();
    const auto b = count_parameters(model_layout(model.config(), model.peft_config(), m));
    EXPECT_EQ(a.trainable, b.trainable) << mode_name(m);
    EXPECT_EQ(a.total, b.total) << mode_name(m);
  }
}

TEST(Model, IdentityAtInit) {
  Rng rng(2);
  const VitConfig c = VitConfig::tiny();
  const VitWeights w = init_vit(c, rng);
  const SelafdModel model(c, w, PeftConfig{}, FineTuneMode::kSelafd, 3);
  for (int i = 0; i < 10; ++i) {
    const Tensor img = random_tensor({3, 32, 32}, rng);
    EXPECT_EQ(model.predict_logits(img), classify(img, w, c));
  }
}

TEST(Model, FreezePolicy) {
  SelafdModel model = tiny_model(FineTuneMode::kSelafd);
  model.for_each_param([](const std::string& name, Tensor& t) {
    const bool backbone = name.rfind("backbone/", 0) == 0;
    EXPECT_EQ(t.requires_grad(), !backbone) << name;
  });
  SelafdModel full = tiny_model(FineTuneMode::kFull);
  for (const auto& e : full.registered_params()) EXPECT_TRUE(e.trainable) << e.name;
}

TEST(Model, FrozenHashTracksFrozenTensorsOnly) {
  SelafdModel model = tiny_model(FineTuneMode::kSelafd);
  const std::string before = frozen_hash(model);
  model.backbone().head.weight[0] += 1.0;  // trainable
  EXPECT_EQ(frozen_hash(model), before);
  model.backbone().blocks[0].fc1.weight[0] += 1.0;  // frozen
  EXPECT_NE(frozen_hash(model), before);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  SelafdModel model = tiny_model(FineTuneMode::kSelafd, 5);
  Rng rng(6);
  for (auto& b : model.peft_blocks()) b.lora_query->b = random_tensor(b.lora_query->b.shape(), rng);
  const TensorContainer c = model_to_container(model);
  const std::string bytes = c.serialize();
  const SelafdModel back = model_from_container(TensorContainer::parse(bytes));
  EXPECT_EQ(back.mode(), model.mode());
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(back.peft_config(), model.peft_config());
  std::vector<const Tensor*> a, b;
  model.for_each_param([&](const std::string&, const Tensor& t) { a.push_back(&t); });
  back.for_each_param([&](const std::string&, const Tensor& t) { b.push_back(&t); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(model_to_container(back).serialize(), bytes);
}

TEST(Checkpoint, Float32StorageIsClose) {
  const SelafdModel model = tiny_model(FineTuneMode::kLinear, 7);
  const TensorContainer c = model_to_container(model, CheckpointParts::kAll, StorageType::kFloat32);
  const SelafdModel back = model_from_container(TensorContainer::parse(c.serialize()));
  EXPECT_LT(max_abs_diff(back.backbone().blocks[0].query.weight, model.backbone().blocks[0].query.weight), 1e-8);
}

TEST(Checkpoint, FileRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "selafd_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.ckpt").string();
  const SelafdModel model = tiny_model(FineTuneMode::kAdapterOnly, 8);
  model_to_container(model).write(path);
  const TensorContainer c = TensorContainer::read(path);
  EXPECT_EQ(c.require_meta("mode"), "adapter_only");
  EXPECT_THROW(c.require("nope"), InputError);
  EXPECT_THROW(TensorContainer::read((dir / "missing.ckpt").string()), IoError);
  EXPECT_THROW(TensorContainer::parse("garbage"), InputError);
  std::string truncated = c.serialize();
  truncated.resize(truncated.size() - 9);
  EXPECT_THROW(TensorContainer::parse(truncated), InputError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, BackboneAndPeftParts) {
  SelafdModel model = tiny_model(FineTuneMode::kSelafd, 9);
  Rng rng(10);
  for (auto& b : model.peft_blocks()) b.serial->w_up = random_tensor(b.serial->w_up.shape(), rng);
  const TensorContainer peft = model_to_container(model, CheckpointParts::kPeft);
  const TensorContainer bb = model_to_container(model, CheckpointParts::kBackbone);
  EXPECT_EQ(peft.find("backbone/patch_embed.weight"), nullptr);
  EXPECT_NE(bb.find("backbone/patch_embed.weight"), nullptr);

  SelafdModel other = tiny_model(FineTuneMode::kSelafd, 11);
  load_backbone(bb, other.backbone());
  load_peft(peft, other);
  EXPECT_EQ(other.peft_blocks()[0].serial->w_up, model.peft_blocks()[0].serial->w_up);
  EXPECT_EQ(other.backbone().blocks[2].key.weight, model.backbone().blocks[2].key.weight);
}

}  // namespace
}  // namespace selafd
