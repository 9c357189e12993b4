// SPDX-License-Identifier: Apache-2.0
#include "selafd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "format.hpp"
#include "selafd/error.hpp"
#include "selafd/random.hpp"

namespace selafd {

using detail::fmt;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive, got " + fmt(lr));
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (!(eta_min >= 0.0) || eta_min > lr) throw ConfigError("eta_min must lie in [0, lr]");
  if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::echo() const {
  return {{"lr", fmt(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"optimizer", "adam"},
          {"beta1", fmt(beta1)},
          {"beta2", fmt(beta2)},
          {"adam_eps", fmt(adam_eps)},
          {"schedule", "cosine"},
          {"t_max", std::to_string(epochs)},
          {"eta_min", fmt(eta_min)},
          {"seed", std::to_string(seed)},
          {"eval_every", std::to_string(eval_every)}};
}

OptimizerState OptimizerState::for_params(const std::vector<Tensor*>& params) {
  OptimizerState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, OptimizerState& state, double lr, double beta1, double beta2,
               double eps) {
  if (state.size() != params.size()) throw ContractError("optimizer state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (state.m[i].size() != p.size()) throw ContractError("optimizer moment shape mismatch");
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double eta_min) {
  if (total_steps == 0) return lr0;
  const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

int argmax_row(const Tensor& logits) {
  const auto d = logits.data();
  return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace

std::pair<double, double> loss_and_accuracy(const SelafdModel& model, const radar::ImageDataset& data,
                                            const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InputError("cannot score an empty index list");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    const auto& s = data.samples.at(idx);
    Graph g;
    const Var logits = model.logits(g, s.image);
    const int label = s.label;
    loss += g.value(g.cross_entropy(logits, std::span<const int>(&label, 1)))[0];
    if (argmax_row(g.value(logits)) == label) ++correct;
  }
  const auto n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::string format_train_log(const TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& extra,
                             const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& [k, v] : config.echo()) out += "# " + k + "=" + v + "\n";
  for (const auto& [k, v] : extra) out += "# " + k + "=" + v + "\n";
  out += "epoch lr train_loss train_acc test_acc wall_ms\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + " " + fmt(r.lr) + " " + fmt(r.train_loss) + " " + fmt(r.train_acc) + " " +
           (r.test_acc ? fmt(*r.test_acc) : "-") + " " + (r.wall_ms ? detail::fixed(*r.wall_ms, 1) : "-") + "\n";
  }
  return out;
}

TrainResult train(SelafdModel& model, const radar::ImageDataset& data, const radar::DatasetSplit& split,
                  const TrainConfig& config) {
  config.validate();
  if (split.train.empty()) throw InputError("training split is empty");
  if (split.test.empty()) throw InputError("test split is empty");
  for (const auto& s : data.samples)
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.config().num_classes)
      throw InputError("label " + std::to_string(s.label) + " of sample '" + s.id + "' is outside the head");

  TrainResult result;
  result.batch_size = config.batch_size;
  if (config.batch_size > split.train.size()) {
    result.batch_size = split.train.size();
    result.notices.push_back("batch_size " + std::to_string(config.batch_size) + " reduced to the " +
                             std::to_string(split.train.size()) + "-sample training split");
  }
  const std::size_t B = result.batch_size;

  const std::vector<Tensor*> params = model.trainable_params();
  OptimizerState state = OptimizerState::for_params(params);
  result.initial_loss = loss_and_accuracy(model, data, split.train).first;

  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(epoch - 1, config.epochs, config.lr, config.eta_min);

    order = split.train;
    Rng rng(derive_seed(config.seed, 0x5eed0000ULL + epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_id = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += B, ++batch_id) {
      const std::size_t end = std::min(begin + B, order.size());
      const double inv = 1.0 / static_cast<double>(end - begin);
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = data.samples[order[k]];
        Graph g;
        const Var logits = model.logits(g, s.image);
        const int label = s.label;
        const Var ce = g.cross_entropy(logits, std::span<const int>(&label, 1));
        const double l = g.value(ce)[0];
        batch_loss += l;
        if (argmax_row(g.value(logits)) == label) ++correct;
        if (!params.empty()) g.backward(g.scale(ce, inv));
      }
      if (!std::isfinite(batch_loss)) {
        std::string ids;
        for (std::size_t k = begin; k < end && k < begin + 8; ++k) ids += " " + data.samples[order[k]].id;
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_id) + " (lr " + fmt(rec.lr) + ", first samples:" + ids + ")");
      }
      loss_sum += batch_loss;
      adam_step(params, state, rec.lr, config.beta1, config.beta2, config.adam_eps);
    }
    model.zero_grad();
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      rec.test_acc = loss_and_accuracy(model, data, split.test).second;
      if (*rec.test_acc > result.best_test_acc) {
        result.best_test_acc = *rec.test_acc;
        result.best_epoch = epoch;
        result.best_checkpoint = model_to_container(model);
      }
    }
    if (config.record_wall_time)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
  }

  result.log = format_train_log(config,
                                {{"mode", std::string(mode_name(model.mode()))},
                                 {"batch_size_used", std::to_string(B)},
                                 {"train_samples", std::to_string(split.train.size())},
                                 {"test_samples", std::to_string(split.test.size())},
                                 {"split_hash", split.hash()},
                                 {"initial_loss", fmt(result.initial_loss)}},
                                result.history);
  for (const auto& n : result.notices) result.log.insert(0, "# notice: " + n + "\n");
  return result;
}

VitWeights with_new_head(VitWeights weights, std::size_t num_classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4ead));
  weights.head = init_head(num_classes, weights.cls_token.dim(1), rng);
  return weights;
}

VitWeights pretrain_backbone(const VitConfig& config, const radar::ImageDataset& distractor,
                             const TrainConfig& train_config, double ratio, TrainResult* result) {
  VitConfig cfg = config;
  cfg.num_classes = distractor.num_classes();
  Rng rng(derive_seed(train_config.seed, 0xb0b0));
  SelafdModel model(cfg, init_vit(cfg, rng), PeftConfig{}, FineTuneMode::kFull, train_config.seed);
  const radar::DatasetSplit sp = radar::split(distractor.labels(), ratio, train_config.seed);
  TrainResult r = train(model, distractor, sp, train_config);
  if (result) *result = std::move(r);
  VitWeights out = model.backbone();
  for_each_weight(out, [](const std::string&, Tensor& t) { t.set_requires_grad(false); });
  return out;
}

}  // namespace selafd
