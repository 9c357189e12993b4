// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "selafd/model.hpp"
#include "selafd/tensor.hpp"

namespace selafd {

enum class StorageType { kFloat64, kFloat32 };

std::string_view storage_name(StorageType type);

/// SELAFD1 container: the magic line "SELAFD1", a plain-text manifest
///
///   meta <key> <value>
///   tensor <name> <f64|f32> <byte-offset> <byte-count> <rank> <dims...>
///   end
///
/// and then the little-endian payloads back to back. Offsets are relative
/// to the first payload byte. f64 entries round-trip bit-exactly; f32 is a
/// lossy storage mode.
class TensorContainer {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    StorageType storage = StorageType::kFloat64;
  };

  void set_meta(std::string key, std::string value);
  std::optional<std::string> meta(std::string_view key) const;
  /// Throws InputError naming the key when absent.
  const std::string& require_meta(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& all_meta() const { return meta_; }

  void add(std::string name, Tensor tensor, StorageType storage = StorageType::kFloat64);
  const Entry* find(std::string_view name) const;
  /// Throws InputError naming the tensor when absent.
  const Tensor& require(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::string serialize() const;
  static TensorContainer parse(std::string_view bytes);

  void write(const std::string& path) const;
  static TensorContainer read(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<Entry> entries_;
};

/// What parts of a model a checkpoint carries.
enum class CheckpointParts { kAll, kBackbone, kPeft };

/// Model config, PEFT config, mode and the selected tensors. Backbone
/// tensors live under "backbone/", the head under "head/", PEFT weights
/// under "peft/".
TensorContainer model_to_container(const SelafdModel& model, CheckpointParts parts = CheckpointParts::kAll,
                                   StorageType storage = StorageType::kFloat64);

/// Rebuilds a model from a checkpoint holding backbone, head and (for
/// PEFT modes) PEFT tensors.
SelafdModel model_from_container(const TensorContainer& container);

VitConfig vit_config_from_meta(const TensorContainer& container);
PeftConfig peft_config_from_meta(const TensorContainer& container);
void write_config_meta(TensorContainer& container, const VitConfig& vit, const PeftConfig& peft,
                       FineTuneMode mode);

/// Loads "backbone/" tensors into `weights`; the head is untouched.
/// Throws InputError on a missing or mis-shaped tensor.
void load_backbone(const TensorContainer& container, VitWeights& weights);
/// Loads "peft/" tensors into the model's existing PEFT modules.
void load_peft(const TensorContainer& container, SelafdModel& model);

}  // namespace selafd
