// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selafd/checkpoint.hpp"
#include "selafd/model.hpp"
#include "selafd/radar/dataset.hpp"

namespace selafd {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Cosine floor; the horizon is always `epochs`.
  double eta_min = 0.0;
  std::uint64_t seed = 0;
  /// Test accuracy is measured every `eval_every` epochs and after the last.
  std::size_t eval_every = 1;
  /// Off by default so that logs of repeated runs compare equal.
  bool record_wall_time = false;

  /// Throws ConfigError on lr <= 0, batch_size or epochs == 0, or betas
  /// outside [0, 1).
  void validate() const;
  /// Ordered key=value echo used in log headers and manifests.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Adam moments for a fixed parameter list.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static OptimizerState for_params(const std::vector<Tensor*>& params);
  std::size_t size() const { return m.size(); }
};

/// One bias-corrected Adam step over `params` using their accumulated
/// gradients. Parameters without a gradient are left untouched. Throws
/// ContractError when the state does not match the parameter list.
void adam_step(const std::vector<Tensor*>& params, OptimizerState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// eta_min + (lr0 - eta_min)(1 + cos(pi step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double eta_min);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // rate used during the epoch
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  std::optional<double> wall_ms;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  /// Mean training loss of the untouched model over the train split.
  double initial_loss = 0.0;
  std::size_t batch_size = 0;
  std::vector<std::string> notices;
  std::size_t best_epoch = 0;
  double best_test_acc = -1.0;
  /// Model state at the best test accuracy (earliest on ties).
  std::optional<TensorContainer> best_checkpoint;
  std::string log;

  double final_loss() const { return history.empty() ? initial_loss : history.back().train_loss; }
};

/// Trains the model's trainable set on `split.train`. Shuffling is seeded
/// per epoch from config.seed; the whole run is deterministic. Throws
/// InputError on an empty split and NumericalError naming the epoch and
/// batch when the loss turns non-finite.
TrainResult train(SelafdModel& model, const radar::ImageDataset& data, const radar::DatasetSplit& split,
                  const TrainConfig& config);

/// Mean cross-entropy and accuracy of the model over `indices`.
std::pair<double, double> loss_and_accuracy(const SelafdModel& model, const radar::ImageDataset& data,
                                            const std::vector<std::size_t>& indices);

/// Training log text: a "# key=value" header then one line per epoch.
std::string format_train_log(const TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& extra,
                             const std::vector<EpochRecord>& history);

/// Fresh tiny backbone trained end to end on the distractor task. The
/// returned weights keep their 4-class head; replace it before
/// fine-tuning.
VitWeights pretrain_backbone(const VitConfig& config, const radar::ImageDataset& distractor,
                             const TrainConfig& train_config, double ratio, TrainResult* result = nullptr);

/// Replaces the head with a fresh `num_classes` head seeded by `seed`.
VitWeights with_new_head(VitWeights weights, std::size_t num_classes, std::uint64_t seed);

}  // namespace selafd
