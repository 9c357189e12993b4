// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "selafd/peft.hpp"
#include "selafd/vit.hpp"

namespace selafd {

/// Fine-tuning regimes compared in the ablation table.
enum class FineTuneMode { kSelafd, kLoraOnly, kAdapterOnly, kLinear, kFull };

const std::vector<FineTuneMode>& all_modes();
std::string_view mode_name(FineTuneMode mode);
/// Throws InputError listing the valid names.
FineTuneMode parse_mode(std::string_view name);

bool mode_uses_lora(FineTuneMode mode);
bool mode_uses_adapters(FineTuneMode mode);

/// A parameter as registered by the model, with its trainability.
struct ParamEntry {
  std::string name;
  Shape shape;
  bool trainable = false;
};

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t total = 0;
  std::size_t lora = 0;
  std::size_t adapter = 0;
  std::size_t head = 0;
  double fraction() const { return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
};

/// Layout of every parameter a model in `mode` registers, without
/// allocating: backbone entries under "backbone/", the head under "head/",
/// PEFT entries under "peft/".
std::vector<ParamEntry> model_layout(const VitConfig& vit, const PeftConfig& peft, FineTuneMode mode);
ParameterCount count_parameters(const std::vector<ParamEntry>& layout);

/// Backbone (frozen unless mode is full), head, and the PEFT modules the
/// mode calls for.
class SelafdModel {
 public:
  SelafdModel() = default;
  /// Wraps `backbone` (its head must already match config.num_classes),
  /// creates zero-initialized PEFT modules for `mode` and applies the
  /// mode's freeze policy.
  SelafdModel(VitConfig config, VitWeights backbone, PeftConfig peft, FineTuneMode mode, std::uint64_t seed);

  const VitConfig& config() const { return config_; }
  const PeftConfig& peft_config() const { return peft_; }
  FineTuneMode mode() const { return mode_; }
  const VitWeights& backbone() const { return backbone_; }
  VitWeights& backbone() { return backbone_; }
  const std::vector<BlockPeft>& peft_blocks() const { return peft_blocks_; }
  std::vector<BlockPeft>& peft_blocks() { return peft_blocks_; }

  /// Logits [1 x num_classes].
  Var logits(Graph& g, const Tensor& image, AttentionRecord* record = nullptr) const;
  /// Logits as a [num_classes] tensor.
  Tensor predict_logits(const Tensor& image) const;

  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::vector<Tensor*> trainable_params();
  std::vector<ParamEntry> registered_params() const;
  ParameterCount count_trainable() const { return count_parameters(registered_params()); }
  void zero_grad();

 private:
  VitConfig config_;
  VitWeights backbone_;
  PeftConfig peft_;
  FineTuneMode mode_ = FineTuneMode::kSelafd;
  std::vector<BlockPeft> peft_blocks_;
};

/// Marks every backbone weight frozen and leaves head and PEFT weights
/// trainable.
void freeze_backbone(SelafdModel& model);

/// Hash over the bytes of every non-trainable tensor, in registration order.
std::string frozen_hash(const SelafdModel& model);

}  // namespace selafd
