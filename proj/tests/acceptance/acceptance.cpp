// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Tolerances and runtime budgets are
// fixed below; nothing is read from the environment.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "selafd/checkpoint.hpp"
#include "selafd/eval.hpp"
#include "selafd/peft.hpp"
#include "selafd/radar/dataset.hpp"
#include "selafd/radar/stft.hpp"
#include "selafd/train.hpp"

namespace {

using namespace selafd;
using testing::random_tensor;

constexpr double kIdentityTol = 1e-12;
constexpr std::size_t kIdentityInputs = 100;
constexpr double kGradEps = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kMergeTol = 1e-12;
constexpr std::size_t kMergeDraws = 1000;
constexpr std::size_t kFreezeEpochs = 5;
constexpr double kParsevalTol = 1e-9;
constexpr std::size_t kCosineEpochs = 200;
constexpr double kCosineTol = 1e-12;
constexpr double kMinSelafdAccuracy = 0.90;
constexpr double kRequiredFallRecall = 1.0;

// Runtime budgets, seconds.
constexpr double kBudget1 = 10, kBudget2 = 60, kBudget3 = 10, kBudget4 = 120, kBudget5 = 10, kBudget6 = 1,
                 kBudget7 = 5, kBudget8 = 15 * 60, kBudget9 = 45 * 60;

// End-to-end setup shared by criteria 8 to 10.
constexpr std::uint64_t kSeed = 0;
constexpr std::size_t kPretrainPerClass = 100;
constexpr std::size_t kPretrainEpochs = 20;
constexpr std::size_t kCorpusPerClass = 100;
constexpr double kSplitRatio = 0.8;
constexpr std::size_t kFineTuneEpochs = 50;
constexpr double kLr = 1e-3;
constexpr std::size_t kBatch = 32;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o, double secs, double budget) {
  const bool in_budget = budget <= 0 || secs < budget;
  const bool pass = o.pass && in_budget;
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s (%s; %.1fs", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  if (budget > 0) std::printf(" of %.0fs budget%s", budget, in_budget ? "" : ", OVER BUDGET");
  std::printf(")\n");
  std::fflush(stdout);
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

void run(int id, const char* title, double budget, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  const Outcome o = guarded(fn);
  report(id, title, o, seconds_since(t0), budget);
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// 1. Zero-initialized PEFT leaves the backbone's logits unchanged.
Outcome identity_at_init() {
  const VitConfig c = VitConfig::tiny();
  Rng rng(11);
  const VitWeights w = init_vit(c, rng);
  const SelafdModel model(c, w, PeftConfig{}, FineTuneMode::kSelafd, 12);
  double worst = 0.0;
  for (std::size_t i = 0; i < kIdentityInputs; ++i) {
    const Tensor image = random_tensor({c.channels, c.image_size, c.image_size}, rng);
    worst = std::max(worst, max_abs_diff(model.predict_logits(image), classify(image, w, c)));
  }
  return {worst < kIdentityTol, std::to_string(kIdentityInputs) + " inputs, max |diff| " + num(worst)};
}

// 2. Finite differences over every trainable tensor of one d=8 block.
Outcome gradient_fidelity() {
  VitConfig c = VitConfig::tiny();
  c.embed_dim = 8;
  c.heads = 2;
  c.depth = 1;
  Rng rng(21);
  BlockWeights w = init_vit(c, rng).blocks[0];
  auto fill = [&](Tensor& t, double mean, double sd) {
    for (double& v : t.data()) v = rng.normal(mean, sd);
  };
  for (LinearWeights* l : {&w.query, &w.key, &w.value, &w.out, &w.fc1, &w.fc2}) {
    fill(l->weight, 0.0, 0.4);
    fill(l->bias, 0.0, 0.1);
  }
  for (LayerNormWeights* n : {&w.ln1, &w.ln2}) {
    fill(n->gamma, 1.0, 0.1);
    fill(n->beta, 0.0, 0.1);
  }
  // Non-zero PEFT weights so every gradient path carries signal.
  BlockPeft p;
  p.lora_query = make_lora(8, 8, 2, LoraTarget::kQuery, rng);
  p.lora_value = make_lora(8, 8, 2, LoraTarget::kValue, rng);
  p.serial = make_adapter(8, 0.5, AdapterPlacement::kSerial, rng);
  p.parallel = make_adapter(8, 0.5, AdapterPlacement::kParallel, rng);
  std::vector<Tensor*> params;
  for (LoraLayer* l : {&*p.lora_query, &*p.lora_value}) {
    fill(l->a, 0.0, 0.4);
    fill(l->b, 0.0, 0.4);
    params.insert(params.end(), {&l->a, &l->b});
  }
  for (Adapter* a : {&*p.serial, &*p.parallel}) {
    fill(a->w_down, 0.0, 0.4);
    fill(a->b_down, 0.0, 0.1);
    fill(a->w_up, 0.0, 0.4);
    fill(a->b_up, 0.0, 0.1);
    params.insert(params.end(), {&a->w_down, &a->b_down, &a->w_up, &a->b_up});
  }
  for (Tensor* t : params) t->set_requires_grad(true);
  const Tensor x = random_tensor({5, 8}, rng);
  const Tensor proj = random_tensor({40, 1}, rng);
  auto build = [&](Graph& g) {
    const Var out = selafd_block_forward(g, g.input(x), w, p, 0.2, c);
    return g.sum(g.matmul(g.reshape(out, {1, 40}), g.input(proj)));
  };
  const auto r = testing::finite_difference_check(build, params, kGradEps, kGradTol);
  return {r.failed == 0 && r.checked > 0, std::to_string(r.checked - r.failed) + "/" + std::to_string(r.checked) +
                                              " parameters within " + num(kGradTol) + ", worst " + num(r.worst)};
}

// 3. LoRA forward equals the merged dense projection.
Outcome lora_merge_equivalence() {
  Rng rng(31);
  double worst = 0.0;
  for (std::size_t draw = 0; draw < kMergeDraws; ++draw) {
    const std::size_t d_out = 2 + rng.below(63), d_in = 2 + rng.below(63);
    const std::size_t rank = 1 + rng.below(std::min(d_out, d_in) - 1);
    const std::size_t rows = 1 + rng.below(8);
    const Tensor w0 = random_tensor({d_out, d_in}, rng, 0.2), bias = random_tensor({d_out}, rng, 0.2);
    const Tensor x = random_tensor({rows, d_in}, rng);
    LoraLayer l = make_lora(d_out, d_in, rank, LoraTarget::kQuery, rng);
    for (double& v : l.b.data()) v = rng.normal(0.0, 0.2);
    Graph g;
    const Tensor& got = g.value(lora_forward(g, g.input(x), w0, &bias, l));
    // (W0 + B A) x + b, summed directly
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t o = 0; o < d_out; ++o) {
        double y = bias[o];
        for (std::size_t i = 0; i < d_in; ++i) {
          double w = w0.at(o, i);
          for (std::size_t k = 0; k < rank; ++k) w += l.b.at(o, k) * l.a.at(k, i);
          y += w * x.at(t, i);
        }
        worst = std::max(worst, std::abs(got.at(t, o) - y));
      }
  }
  return {worst < kMergeTol, std::to_string(kMergeDraws) + " draws, max |diff| " + num(worst)};
}

radar::ImageDataset small_corpus(std::size_t per_class, std::uint64_t seed) {
  const radar::SynthOptions o;
  return radar::build_image_dataset(radar::synthetic_corpus(per_class, seed, o),
                                    radar::StftParams::defaults_for(o.sample_rate), {}, radar::RasterOptions{});
}

// 4. Training never touches frozen weights.
Outcome freeze_bit_exact() {
  const auto data = small_corpus(10, 41);
  const auto sp = radar::split(data.labels(), kSplitRatio, 41);
  Rng rng(42);
  const VitConfig c = VitConfig::tiny();
  SelafdModel model(c, init_vit(c, rng), PeftConfig{}, FineTuneMode::kSelafd, 43);
  const std::string before = frozen_hash(model);
  const std::string trainable_before = model_to_container(model, CheckpointParts::kPeft).serialize();
  TrainConfig t;
  t.lr = kLr;
  t.batch_size = 16;
  t.epochs = kFreezeEpochs;
  t.seed = 44;
  const TrainResult r = train(model, data, sp, t);
  const std::string after = frozen_hash(model);
  const bool moved = model_to_container(model, CheckpointParts::kPeft).serialize() != trainable_before;
  return {after == before && moved && r.history.size() == kFreezeEpochs,
          "frozen hash " + before + " -> " + after + (moved ? ", adapters updated" : ", adapters did not move")};
}

// 5. Bin-centred tones peak at their bin in every frame; Parseval per frame.
Outcome stft_oracle() {
  const double fs = 320.0;
  const radar::StftParams p = radar::StftParams::defaults_for(fs);
  const std::size_t n = p.fft_len, samples = 1280;
  const auto window = radar::hann_window(p.window_len);
  std::size_t frames_checked = 0, peak_misses = 0;
  for (int k : {-29, -13, -1, 0, 4, 17, 31}) {
    std::vector<std::complex<double>> x(samples);
    const double f = k * fs / static_cast<double>(n);
    for (std::size_t t = 0; t < samples; ++t) x[t] = std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(t) / fs);
    const auto frames = radar::stft_complex(x, p);
    const auto expected = static_cast<std::size_t>(static_cast<long>(n / 2) + k);
    for (const auto& fr : frames) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < n; ++r)
        if (std::abs(fr[r]) > std::abs(fr[best])) best = r;
      peak_misses += best != expected;
      ++frames_checked;
    }
  }
  Rng rng(51);
  std::vector<std::complex<double>> noise(samples);
  for (auto& v : noise) v = {rng.normal(), rng.normal()};
  const auto frames = radar::stft_complex(noise, p);
  double worst = 0.0, worst_dft = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    std::vector<std::complex<double>> windowed(n, 0.0);
    double time_energy = 0.0;
    for (std::size_t i = 0; i < p.window_len; ++i) {
      windowed[i] = window[i] * noise[t * p.hop + i];
      time_energy += std::norm(windowed[i]);
    }
    double freq_energy = 0.0;
    for (const auto& v : frames[t]) freq_energy += std::norm(v);
    worst = std::max(worst, std::abs(freq_energy / static_cast<double>(n) - time_energy) / time_energy);
    if (t % 50 == 0) {
      const auto ref = testing::shifted_dft(windowed);
      for (std::size_t r = 0; r < n; ++r) worst_dft = std::max(worst_dft, std::abs(ref[r] - frames[t][r]));
    }
  }
  return {peak_misses == 0 && worst < kParsevalTol && worst_dft < 1e-9,
          std::to_string(frames_checked - peak_misses) + "/" + std::to_string(frames_checked) +
              " tone frames peak on the analytic bin, Parseval rel err " + num(worst) + ", |X - DFT| " +
              num(worst_dft)};
}

// 6. The logged learning rate follows the cosine closed form.
Outcome cosine_trace() {
  VitConfig c;
  c.image_size = 4;
  c.patch_size = 2;
  c.channels = 1;
  c.embed_dim = 4;
  c.depth = 1;
  c.heads = 1;
  c.num_classes = 2;
  radar::ImageDataset d;
  d.class_names = {"a", "b"};
  Rng rng(61);
  for (int i = 0; i < 4; ++i) d.samples.push_back({random_tensor({1, 4, 4}, rng), i % 2, std::to_string(i)});
  const auto sp = radar::split(d.labels(), 0.5, 61);
  SelafdModel model(c, init_vit(c, rng), PeftConfig{1, 0.5, 0.2, true, true}, FineTuneMode::kLinear, 62);
  TrainConfig t;  // lr 1e-4, eta_min 0
  t.epochs = kCosineEpochs;
  t.eval_every = kCosineEpochs;
  const TrainResult r = train(model, d, sp, t);
  std::istringstream log(r.log);
  std::string line;
  std::size_t rows = 0;
  double worst = 0.0;
  bool in_table = false;
  while (std::getline(log, line)) {
    if (line.rfind("epoch ", 0) == 0) {
      in_table = true;
      continue;
    }
    if (!in_table || line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::size_t epoch = 0;
    double lr = 0.0;
    fields >> epoch >> lr;
    const double closed = 0.5 * t.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) / kCosineEpochs));
    worst = std::max(worst, std::abs(lr - closed));
    ++rows;
  }
  return {rows == kCosineEpochs && worst < kCosineTol,
          std::to_string(rows) + " logged epochs, max |lr - closed form| " + num(worst)};
}

// 7. Parameter accounting against closed forms.
Outcome parameter_accounting() {
  const VitConfig b16 = VitConfig::vit_b16(6);
  PeftConfig p;
  p.rank = 8;
  const auto lora = count_parameters(model_layout(b16, p, FineTuneMode::kSelafd)).lora;
  const std::size_t closed_lora = b16.depth * 2 * p.rank * (b16.embed_dim + b16.embed_dim);
  bool ok = lora == 294912 && lora == closed_lora;
  std::string detail = "LoRA " + std::to_string(lora);
  for (std::size_t classes : {6, 1000}) {
    const auto linear = count_parameters(model_layout(VitConfig::vit_b16(classes), p, FineTuneMode::kLinear));
    ok = ok && linear.trainable == classes * 768 + classes && linear.head == linear.trainable;
    detail += ", linear C=" + std::to_string(classes) + ": " + std::to_string(linear.trainable);
  }
  return {ok, detail};
}

// Artifacts of one end-to-end pass, compared byte for byte across passes.
struct Pretrained {
  VitWeights backbone;
  std::string log;
  std::string container;
};

struct Corpus {
  radar::ImageDataset data;
  radar::DatasetSplit split;
};

Pretrained pretrain() {
  radar::SynthOptions so;
  const auto distractor = radar::distractor_dataset(kPretrainPerClass, kSeed, so, radar::RasterOptions{});
  TrainConfig t;
  t.lr = kLr;
  t.batch_size = kBatch;
  t.epochs = kPretrainEpochs;
  t.seed = kSeed;
  TrainResult r;
  Pretrained p;
  p.backbone = pretrain_backbone(VitConfig::tiny(4), distractor, t, kSplitRatio, &r);
  p.log = r.log;
  const SelafdModel wrapped(VitConfig::tiny(4), p.backbone, PeftConfig{}, FineTuneMode::kFull, kSeed);
  p.container = model_to_container(wrapped).serialize();
  return p;
}

Corpus corpus() {
  Corpus c;
  c.data = small_corpus(kCorpusPerClass, kSeed);
  c.split = radar::split(c.data.labels(), kSplitRatio, kSeed);
  return c;
}

AblationTable fine_tune(const Pretrained& p, const Corpus& c, std::vector<FineTuneMode> modes) {
  AblationConfig a;
  a.train.lr = kLr;
  a.train.batch_size = kBatch;
  a.train.epochs = kFineTuneEpochs;
  a.train.seed = kSeed;
  a.modes = std::move(modes);
  return ablate(VitConfig::tiny(), p.backbone, c.data, c.split, a);
}

const AblationRow* row_of(const AblationTable& t, FineTuneMode m) {
  for (const auto& r : t.rows)
    if (r.mode == m) return &r;
  return nullptr;
}

// Everything a row produces that must repeat bit for bit.
std::string row_bytes(const AblationRow& r) {
  return r.train_log + "\x1f" + format_report(r.report) + "\x1f" + format_predictions(r.report) + "\x1f" +
         (r.checkpoint ? r.checkpoint->serialize() : std::string("<none>"));
}

std::size_t differing_rows(const AblationTable& a, const AblationTable& b) {
  std::size_t diff = a.rows.size() == b.rows.size() ? 0 : 1;
  for (std::size_t i = 0; i < std::min(a.rows.size(), b.rows.size()); ++i)
    diff += row_bytes(a.rows[i]) != row_bytes(b.rows[i]);
  return diff;
}

}  // namespace

int main() {
  std::printf("acceptance: 10 criteria\n");
  std::fflush(stdout);
  run(1, "identity at init", kBudget1, identity_at_init);
  run(2, "gradient fidelity", kBudget2, gradient_fidelity);
  run(3, "LoRA merge equivalence", kBudget3, lora_merge_equivalence);
  run(4, "freeze bit-exactness", kBudget4, freeze_bit_exact);
  run(5, "STFT oracle", kBudget5, stft_oracle);
  run(6, "cosine schedule", kBudget6, cosine_trace);
  run(7, "parameter accounting", kBudget7, parameter_accounting);

  // 8: pretrain, then SelaFD and linear fine-tuning on one split.
  Pretrained first;
  Corpus data;
  AblationTable pair;
  {
    const auto t0 = Clock::now();
    const Outcome o = guarded([&]() -> Outcome {
      first = pretrain();
      data = corpus();
      pair = fine_tune(first, data, {FineTuneMode::kSelafd, FineTuneMode::kLinear});
      const AblationRow* s = row_of(pair, FineTuneMode::kSelafd);
      const AblationRow* l = row_of(pair, FineTuneMode::kLinear);
      if (!s || !l || !s->ok || !l->ok)
        return {false, "a fine-tuning run failed: " + (s ? s->error : "") + " " + (l ? l->error : "")};
      const double acc = s->report.accuracy, fall = fall_recall(s->report), lin = l->report.accuracy;
      const bool same_split = s->report.split_hash == l->report.split_hash && s->report.split_hash == data.split.hash();
      return {acc >= kMinSelafdAccuracy && fall >= kRequiredFallRecall && acc >= lin && same_split,
              "selafd accuracy " + num(acc) + ", fall recall " + num(fall) + ", linear accuracy " + num(lin) +
                  ", split " + s->report.split_hash + (same_split ? "" : " (split mismatch)")};
    });
    report(8, "synthetic end-to-end", o, seconds_since(t0), kBudget8);
  }

  // 9: the five-mode table, twice.
  AblationTable table_a, table_b;
  {
    const auto t0 = Clock::now();
    double one_run = 0.0;
    const Outcome o = guarded([&]() -> Outcome {
      if (first.container.empty()) return {false, "no pretrained backbone from criterion 8"};
      table_a = fine_tune(first, data, all_modes());
      one_run = seconds_since(t0);
      table_b = fine_tune(first, data, all_modes());
      bool shared = table_a.rows.size() == 5;
      for (const auto& r : table_a.rows) shared = shared && r.ok && r.report.split_hash == table_a.split_hash;
      const bool same = format_ablation(table_a) == format_ablation(table_b) &&
                        format_ablation_table(table_a) == format_ablation_table(table_b);
      return {shared && same, std::to_string(table_a.rows.size()) + " rows, split " + table_a.split_hash +
                                  (shared ? " shared" : " NOT shared") + ", rerun " +
                                  (same ? "byte-identical" : "DIFFERS")};
    });
    report(9, "ablation harness", o, one_run > 0 ? one_run : seconds_since(t0), kBudget9);
    std::printf("%s", format_ablation_table(table_a).c_str());
  }

  // 10: criteria 8 and 9 repeated with the same seed.
  run(10, "determinism", 0, [&]() -> Outcome {
    if (first.container.empty() || table_a.rows.empty()) return {false, "criteria 8-9 produced no artifacts"};
    const Pretrained second = pretrain();
    const AblationTable pair_again = fine_tune(second, corpus(), {FineTuneMode::kSelafd, FineTuneMode::kLinear});
    const bool pretrain_same = second.log == first.log && second.container == first.container;
    const std::size_t pair_diff = differing_rows(pair, pair_again);
    const std::size_t table_diff = differing_rows(table_a, table_b);
    // the same modes inside the five-mode table must match the pair run
    std::size_t cross_diff = 0;
    for (const auto& r : pair.rows) {
      const AblationRow* other = row_of(table_a, r.mode);
      cross_diff += !other || row_bytes(*other) != row_bytes(r);
    }
    return {pretrain_same && pair_diff == 0 && table_diff == 0 && cross_diff == 0,
            std::string("pretrain log+checkpoint ") + (pretrain_same ? "identical" : "DIFFER") +
                ", end-to-end rows differing " + std::to_string(pair_diff) + ", ablation rows differing " +
                std::to_string(table_diff) + ", pair vs table rows differing " + std::to_string(cross_diff)};
  });

  std::printf("acceptance: %d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
