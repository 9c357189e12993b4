// SPDX-License-Identifier: Apache-2.0
#include "selafd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "format.hpp"
#include "selafd/error.hpp"
#include "selafd/radar/raster.hpp"

namespace selafd {

using detail::fmt;

int argmax(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

MetricsReport report_from_predictions(const std::vector<std::string>& class_names,
                                      const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw InputError("no predictions to score");
  const std::size_t C = class_names.size();
  MetricsReport r;
  r.class_names = class_names;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  for (const auto& p : predictions) {
    if (p.truth < 0 || p.prediction < 0 || static_cast<std::size_t>(p.truth) >= C ||
        static_cast<std::size_t>(p.prediction) >= C)
      throw InputError("prediction for '" + p.id + "' is outside the class range");
    ++r.confusion[static_cast<std::size_t>(p.truth)][static_cast<std::size_t>(p.prediction)];
  }
  std::size_t trace = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t row = 0;
    for (std::size_t k = 0; k < C; ++k) row += r.confusion[c][k];
    trace += r.confusion[c][c];
    r.recall.push_back(row ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(row)
                           : std::numeric_limits<double>::quiet_NaN());
  }
  r.total = predictions.size();
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);
  r.predictions = predictions;
  return r;
}

MetricsReport evaluate(const SelafdModel& model, const radar::ImageDataset& data, const radar::DatasetSplit& split) {
  if (split.test.empty()) throw InputError("test split is empty");
  std::vector<Prediction> preds;
  preds.reserve(split.test.size());
  for (std::size_t idx : split.test) {
    const auto& s = data.samples.at(idx);
    const Tensor logits = model.predict_logits(s.image);
    preds.push_back({s.label, argmax(logits.data()), s.id});
  }
  MetricsReport r = report_from_predictions(data.class_names, preds);
  r.mode = std::string(mode_name(model.mode()));
  r.params = model.count_trainable();
  r.split_hash = split.hash();
  return r;
}

double fall_recall(const MetricsReport& report) {
  const auto it = std::find(report.class_names.begin(), report.class_names.end(), "falling");
  if (it == report.class_names.end()) throw InputError("report has no 'falling' class");
  const auto c = static_cast<std::size_t>(it - report.class_names.begin());
  std::size_t row = 0;
  for (std::size_t v : report.confusion.at(c)) row += v;
  if (row == 0) throw InputError("no falling samples in the test set");
  return static_cast<double>(report.confusion[c][c]) / static_cast<double>(row);
}

std::string format_report(const MetricsReport& r) {
  std::string out = "mode=" + r.mode + "\n";
  out += "split_hash=" + r.split_hash + "\n";
  out += "test_samples=" + std::to_string(r.total) + "\n";
  out += "accuracy=" + fmt(r.accuracy) + "\n";
  out += "trainable_params=" + std::to_string(r.params.trainable) + "\n";
  out += "total_params=" + std::to_string(r.params.total) + "\n";
  out += "lora_params=" + std::to_string(r.params.lora) + "\n";
  out += "adapter_params=" + std::to_string(r.params.adapter) + "\n";
  out += "head_params=" + std::to_string(r.params.head) + "\n";
  for (const auto& [k, v] : r.config) out += "config." + k + "=" + v + "\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c)
    out += "recall." + r.class_names[c] + "=" + (std::isnan(r.recall[c]) ? std::string("-") : fmt(r.recall[c])) + "\n";
  out += "\nconfusion (rows truth, columns prediction)\n";
  std::size_t w = 6;
  for (const auto& n : r.class_names) w = std::max(w, n.size() + 1);
  auto pad = [w](const std::string& s) { return s + std::string(w > s.size() ? w - s.size() : 1, ' '); };
  out += pad("");
  for (const auto& n : r.class_names) out += pad(n);
  out += "\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    out += pad(r.class_names[c]);
    for (std::size_t v : r.confusion[c]) out += pad(std::to_string(v));
    out += "\n";
  }
  return out;
}

std::string format_predictions(const MetricsReport& r) {
  std::string out = "truth,prediction,sample_id\n";
  for (const auto& p : r.predictions)
    out += r.class_names.at(static_cast<std::size_t>(p.truth)) + "," +
           r.class_names.at(static_cast<std::size_t>(p.prediction)) + "," + p.id + "\n";
  return out;
}

std::vector<Prediction> parse_predictions(const std::string& text, const std::vector<std::string>& class_names) {
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw InputError("unknown class '" + name + "' in prediction dump");
    return static_cast<int>(it - class_names.begin());
  };
  std::vector<Prediction> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line == "truth,prediction,sample_id") continue;
    }
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw InputError("malformed prediction line '" + line + "'");
    out.push_back({index_of(line.substr(0, a)), index_of(line.substr(a + 1, b - a - 1)), line.substr(b + 1)});
  }
  return out;
}

Tensor AttentionSet::cls_grid(std::size_t layer, std::optional<std::size_t> head) const {
  if (layer >= raw.size()) throw InputError("attention layer " + std::to_string(layer) + " out of range");
  const auto& heads = raw[layer];
  if (head && *head >= heads.size()) throw InputError("attention head " + std::to_string(*head) + " out of range");
  const std::size_t g = config.grid();
  Tensor out({g, g});
  const std::size_t first = head ? *head : 0;
  const std::size_t last = head ? *head + 1 : heads.size();
  const double w = 1.0 / static_cast<double>(last - first);
  for (std::size_t h = first; h < last; ++h)
    for (std::size_t p = 0; p < g * g; ++p) out[p] += w * heads[h].at(0, p + 1);
  return out;
}

Tensor AttentionSet::default_view() const {
  if (raw.empty()) throw InputError("no attention was recorded");
  return upsample_map(cls_grid(raw.size() - 1), config.image_size);
}

AttentionSet extract_attention(const SelafdModel& model, const Tensor& image) {
  AttentionRecord record;
  Graph g;
  model.logits(g, image, &record);
  AttentionSet out;
  out.config = model.config();
  out.raw = std::move(record.layers);
  return out;
}

Tensor upsample_map(const Tensor& grid, std::size_t image_size) {
  return radar::bilinear_resize(grid, image_size, image_size);
}

AblationTable ablate(const VitConfig& config, const VitWeights& backbone, const radar::ImageDataset& data,
                     const radar::DatasetSplit& split, const AblationConfig& ablation) {
  ablation.train.validate();
  AblationTable table;
  table.split_hash = split.hash();
  table.seed = ablation.train.seed;
  table.epochs = ablation.train.epochs;
  table.schedule = "cosine(t_max=" + std::to_string(ablation.train.epochs) + ",eta_min=" + fmt(ablation.train.eta_min) +
                   ")";
  VitConfig cfg = config;
  cfg.num_classes = data.num_classes();
  for (FineTuneMode mode : ablation.modes) {
    AblationRow row;
    row.mode = mode;
    try {
      SelafdModel model(cfg, with_new_head(backbone, cfg.num_classes, ablation.train.seed), ablation.peft, mode,
                        ablation.train.seed);
      const TrainResult tr = train(model, data, split, ablation.train);
      row.report = evaluate(model, data, split);
      row.report.config = ablation.train.echo();
      if (row.report.split_hash != table.split_hash) throw ContractError("split hash changed during the sweep");
      row.best_epoch = tr.best_epoch;
      row.best_test_acc = tr.best_test_acc;
      row.final_train_loss = tr.final_loss();
      row.train_log = tr.log;
      row.checkpoint = model_to_container(model);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      row.report.mode = std::string(mode_name(mode));
      row.report.split_hash = table.split_hash;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_ablation(const AblationTable& t) {
  std::string out = "[ablation]\nsplit_hash=" + t.split_hash + "\nseed=" + std::to_string(t.seed) +
                    "\nepochs=" + std::to_string(t.epochs) + "\nschedule=" + t.schedule +
                    "\nrows=" + std::to_string(t.rows.size()) + "\n";
  for (const auto& r : t.rows) {
    out += "\n[mode." + r.report.mode + "]\n";
    out += "status=" + std::string(r.ok ? "ok" : "failed") + "\n";
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out += "error=" + msg + "\n";
      continue;
    }
    out += "split_hash=" + r.report.split_hash + "\n";
    out += "accuracy=" + fmt(r.report.accuracy) + "\n";
    std::string fr = "-";
    try {
      fr = fmt(fall_recall(r.report));
    } catch (const InputError&) {
    }
    out += "fall_recall=" + fr + "\n";
    out += "trainable_params=" + std::to_string(r.report.params.trainable) + "\n";
    out += "total_params=" + std::to_string(r.report.params.total) + "\n";
    out += "final_train_loss=" + fmt(r.final_train_loss) + "\n";
    out += "best_epoch=" + std::to_string(r.best_epoch) + "\n";
    out += "best_test_acc=" + fmt(r.best_test_acc) + "\n";
  }
  return out;
}

std::string format_ablation_table(const AblationTable& t) {
  std::string out = "split " + t.split_hash + ", seed " + std::to_string(t.seed) + ", " + std::to_string(t.epochs) +
                    " epochs, " + t.schedule + "\n\n";
  auto col = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out += col("mode", 14) + col("accuracy", 10) + col("fall", 8) + col("trainable", 12) + "status\n";
  for (const auto& r : t.rows) {
    if (!r.ok) {
      out += col(r.report.mode, 14) + col("-", 10) + col("-", 8) + col("-", 12) + "failed: " + r.error + "\n";
      continue;
    }
    std::string fr = "-";
    try {
      fr = detail::fixed(100.0 * fall_recall(r.report), 1) + "%";
    } catch (const InputError&) {
    }
    out += col(r.report.mode, 14) + col(detail::fixed(100.0 * r.report.accuracy, 2) + "%", 10) + col(fr, 8) +
           col(std::to_string(r.report.params.trainable), 12) + "ok\n";
  }
  return out;
}

}  // namespace selafd
