// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selafd/model.hpp"
#include "selafd/radar/dataset.hpp"
#include "selafd/train.hpp"

namespace selafd {

struct Prediction {
  int truth = 0;
  int prediction = 0;
  std::string id;
};

struct MetricsReport {
  std::string mode;
  std::vector<std::string> class_names;
  /// Rows are the true class, columns the prediction.
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> recall;  // NaN for a class absent from the test set
  double accuracy = 0.0;
  std::size_t total = 0;
  ParameterCount params;
  std::string split_hash;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<Prediction> predictions;
};

/// Index of the largest value; ties go to the lower index.
int argmax(std::span<const double> values);

/// Confusion matrix, recall and accuracy from a prediction list.
MetricsReport report_from_predictions(const std::vector<std::string>& class_names,
                                      const std::vector<Prediction>& predictions);

/// Classifies every test sample. Throws InputError on an empty test set.
MetricsReport evaluate(const SelafdModel& model, const radar::ImageDataset& data, const radar::DatasetSplit& split);

/// Recall of the "falling" class. Throws InputError when the class is
/// missing or has no test samples.
double fall_recall(const MetricsReport& report);

/// Byte-stable text report (key=value header, matrix, per-class recall).
std::string format_report(const MetricsReport& report);
/// One "truth,prediction,sample_id" line per test sample, class names.
std::string format_predictions(const MetricsReport& report);
/// Reads format_predictions() output back against `class_names`.
std::vector<Prediction> parse_predictions(const std::string& text, const std::vector<std::string>& class_names);

/// Retained attention of one forward pass.
struct AttentionSet {
  VitConfig config;
  /// [layer][head], each [(N+1) x (N+1)] softmax output.
  std::vector<std::vector<Tensor>> raw;

  /// Class-token row without its self-attention entry, on the patch grid
  /// [grid x grid]. `head` empty means the mean over heads.
  Tensor cls_grid(std::size_t layer, std::optional<std::size_t> head = std::nullopt) const;
  /// Last layer, head mean, class-token row, upsampled to the image size.
  Tensor default_view() const;
};

AttentionSet extract_attention(const SelafdModel& model, const Tensor& image);

/// Bilinear (corner-aligned) upsampling of a patch-grid map.
Tensor upsample_map(const Tensor& grid, std::size_t image_size);

struct AblationConfig {
  TrainConfig train;
  PeftConfig peft;
  std::vector<FineTuneMode> modes = all_modes();
};

struct AblationRow {
  FineTuneMode mode = FineTuneMode::kSelafd;
  bool ok = false;
  std::string error;
  MetricsReport report;
  std::size_t best_epoch = 0;
  double best_test_acc = 0.0;
  double final_train_loss = 0.0;
  std::string train_log;
  std::optional<TensorContainer> checkpoint;
};

struct AblationTable {
  std::string split_hash;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::string schedule;
  std::vector<AblationRow> rows;
};

/// Trains and evaluates one model per mode from the same backbone, split,
/// seed and schedule. A mode that throws becomes a failed row. The
/// backbone's head is replaced by a fresh one seeded from the train seed.
AblationTable ablate(const VitConfig& config, const VitWeights& backbone, const radar::ImageDataset& data,
                     const radar::DatasetSplit& split, const AblationConfig& ablation);

/// Machine-readable: a header block, then one key=value block per mode.
std::string format_ablation(const AblationTable& table);
/// Fixed-width table for people.
std::string format_ablation_table(const AblationTable& table);

}  // namespace selafd
