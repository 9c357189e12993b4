// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "selafd/checkpoint.hpp"
#include "selafd/config.hpp"
#include "selafd/error.hpp"
#include "selafd/eval.hpp"
#include "selafd/hash.hpp"
#include "selafd/radar/dataset.hpp"
#include "selafd/train.hpp"

namespace selafd::cli {

namespace fs = std::filesystem;

std::string RunManifest::format() const {
  std::ostringstream o;
  o << "# selafd run manifest\n";
  o << "command=" << command << "\n";
  o << "version=" << kVersion << "\n";
  o << "seed=" << seed << "\n";
  o << "seed_source=" << seed_source << "\n";
  for (const auto& [k, v] : config) o << "config." << k << "=" << v << "\n";
  for (const auto& [role, ph] : inputs) {
    o << "input." << role << ".path=" << ph.first << "\n";
    o << "input." << role << ".hash=" << ph.second << "\n";
  }
  for (const auto& [name, hash] : outputs) o << "output." << name << "=" << hash << "\n";
  for (const auto& n : notes) o << "note=" << n << "\n";
  return o.str();
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, ptr);
}

// Flag values; an empty optional means "not given on the command line".
struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool tiny = false;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> rank;
  std::optional<double> scale;
  std::optional<double> split_ratio;
  bool wall_time = false;

  std::string out_dir;
  std::string corpus_dir;
  std::string mode;
  std::string backbone;
  std::string checkpoint;
  std::string modes;
  std::string eval_split = "test";
  std::size_t per_class = 100;
  std::optional<double> snr_db;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::optional<std::size_t> limit;
  bool no_pgm = false;
};

// Optional STFT overrides; unset fields come from the recording's rate.
struct StftOverrides {
  std::optional<std::size_t> window_len;
  std::optional<std::size_t> hop;
  std::optional<std::size_t> fft_len;

  radar::StftParams resolve(double sample_rate) const {
    radar::StftParams p = radar::StftParams::defaults_for(sample_rate);
    if (window_len) p.window_len = *window_len;
    if (hop) p.hop = *hop;
    if (fft_len) p.fft_len = *fft_len;
    p.validate();
    return p;
  }
};

struct Settings {
  std::string preset = "vit_b16";
  VitConfig vit = VitConfig::vit_b16(radar::kNumActivities);
  PeftConfig peft;
  TrainConfig train;
  double split_ratio = 0.8;
  radar::SynthOptions synth;
  StftOverrides stft;
  double dynamic_range_db = 60.0;
  std::size_t pretrain_per_class = 100;
  std::size_t pretrain_epochs = 20;
  double pretrain_lr = 1e-3;
  std::size_t pretrain_batch_size = 32;
  double pretrain_split_ratio = 0.8;

  std::uint64_t seed = 0;
  std::string seed_source = "default";
  std::vector<std::string> notes;
  std::optional<std::pair<std::string, std::string>> config_input;  // path, hash

  TrainConfig pretrain_config() const {
    TrainConfig c = train;
    c.lr = pretrain_lr;
    c.epochs = pretrain_epochs;
    c.batch_size = pretrain_batch_size;
    return c;
  }

  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> e;
    auto add = [&](std::string k, std::string v) { e.emplace_back(std::move(k), std::move(v)); };
    auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("auto"); };
    add("model.preset", preset);
    add("model.image_size", std::to_string(vit.image_size));
    add("model.patch_size", std::to_string(vit.patch_size));
    add("model.channels", std::to_string(vit.channels));
    add("model.embed_dim", std::to_string(vit.embed_dim));
    add("model.depth", std::to_string(vit.depth));
    add("model.heads", std::to_string(vit.heads));
    add("model.mlp_ratio", std::to_string(vit.mlp_ratio));
    add("peft.rank", std::to_string(peft.rank));
    add("peft.bottleneck_ratio", fmt(peft.bottleneck_ratio));
    add("peft.parallel_scale", fmt(peft.parallel_scale));
    add("peft.lora_query", peft.lora_query ? "true" : "false");
    add("peft.lora_value", peft.lora_value ? "true" : "false");
    for (const auto& [k, v] : train.echo())
      if (k != "seed") add("train." + k, v);
    add("train.wall_time", train.record_wall_time ? "true" : "false");
    add("data.split_ratio", fmt(split_ratio));
    add("data.snr_db", fmt(synth.snr_db));
    add("data.duration_s", fmt(synth.duration_s));
    add("data.sample_rate", fmt(synth.sample_rate));
    add("stft.window_len", opt(stft.window_len));
    add("stft.hop", opt(stft.hop));
    add("stft.fft_len", opt(stft.fft_len));
    add("stft.dynamic_range_db", fmt(dynamic_range_db));
    add("pretrain.per_class", std::to_string(pretrain_per_class));
    add("pretrain.epochs", std::to_string(pretrain_epochs));
    add("pretrain.lr", fmt(pretrain_lr));
    add("pretrain.batch_size", std::to_string(pretrain_batch_size));
    add("pretrain.split_ratio", fmt(pretrain_split_ratio));
    return e;
  }
};

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "seed",
      "model.preset", "model.image_size", "model.patch_size", "model.channels", "model.embed_dim",
      "model.depth", "model.heads", "model.mlp_ratio",
      "peft.rank", "peft.bottleneck_ratio", "peft.parallel_scale", "peft.lora_query", "peft.lora_value",
      "train.lr", "train.batch_size", "train.epochs", "train.beta1", "train.beta2", "train.adam_eps",
      "train.eta_min", "train.eval_every", "train.wall_time",
      "data.split_ratio", "data.snr_db", "data.duration_s", "data.sample_rate",
      "stft.window_len", "stft.hop", "stft.fft_len", "stft.dynamic_range_db",
      "pretrain.per_class", "pretrain.epochs", "pretrain.lr", "pretrain.batch_size", "pretrain.split_ratio"};
  return keys;
}

VitConfig preset_config(const std::string& name) {
  if (name == "tiny") return VitConfig::tiny(radar::kNumActivities);
  if (name == "vit_b16") return VitConfig::vit_b16(radar::kNumActivities);
  throw ConfigError("unknown model preset '" + name + "'; valid presets: tiny, vit_b16");
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("SELAFD_SEED");
  if (!raw || !*raw) return std::nullopt;
  const std::string_view text(raw);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("SELAFD_SEED must be an unsigned integer, got '" + std::string(text) + "'");
  return v;
}

// Defaults, then the config file, then flags.
Settings resolve_settings(const Flags& f) {
  Settings s;
  ConfigFile file;
  if (!f.config_path.empty()) {
    if (fs::exists(f.config_path)) {
      file = ConfigFile::load(f.config_path);
      s.config_input = std::make_pair(f.config_path, hash_file(f.config_path));
    } else {
      s.notes.push_back("config file " + f.config_path + " not found; defaults used");
    }
  }
  const auto unknown = file.unknown_keys(known_keys());
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "' in " + f.config_path);

  auto u64 = [&](const char* key, std::size_t& dst) {
    if (auto v = file.get_u64(key)) dst = static_cast<std::size_t>(*v);
  };
  auto dbl = [&](const char* key, double& dst) {
    if (auto v = file.get_double(key)) dst = *v;
  };
  auto boolean = [&](const char* key, bool& dst) {
    if (auto v = file.get_bool(key)) dst = *v;
  };

  if (auto p = file.get("model.preset")) s.preset = *p;
  s.vit = preset_config(s.preset);
  u64("model.image_size", s.vit.image_size);
  u64("model.patch_size", s.vit.patch_size);
  u64("model.channels", s.vit.channels);
  u64("model.embed_dim", s.vit.embed_dim);
  u64("model.depth", s.vit.depth);
  u64("model.heads", s.vit.heads);
  u64("model.mlp_ratio", s.vit.mlp_ratio);
  if (f.tiny) {
    s.preset = "tiny";
    s.vit = preset_config("tiny");
  }

  u64("peft.rank", s.peft.rank);
  dbl("peft.bottleneck_ratio", s.peft.bottleneck_ratio);
  dbl("peft.parallel_scale", s.peft.parallel_scale);
  boolean("peft.lora_query", s.peft.lora_query);
  boolean("peft.lora_value", s.peft.lora_value);

  dbl("train.lr", s.train.lr);
  u64("train.batch_size", s.train.batch_size);
  u64("train.epochs", s.train.epochs);
  dbl("train.beta1", s.train.beta1);
  dbl("train.beta2", s.train.beta2);
  dbl("train.adam_eps", s.train.adam_eps);
  dbl("train.eta_min", s.train.eta_min);
  u64("train.eval_every", s.train.eval_every);
  boolean("train.wall_time", s.train.record_wall_time);

  dbl("data.split_ratio", s.split_ratio);
  dbl("data.snr_db", s.synth.snr_db);
  dbl("data.duration_s", s.synth.duration_s);
  dbl("data.sample_rate", s.synth.sample_rate);
  if (auto v = file.get_u64("stft.window_len")) s.stft.window_len = static_cast<std::size_t>(*v);
  if (auto v = file.get_u64("stft.hop")) s.stft.hop = static_cast<std::size_t>(*v);
  if (auto v = file.get_u64("stft.fft_len")) s.stft.fft_len = static_cast<std::size_t>(*v);
  dbl("stft.dynamic_range_db", s.dynamic_range_db);

  u64("pretrain.per_class", s.pretrain_per_class);
  u64("pretrain.epochs", s.pretrain_epochs);
  dbl("pretrain.lr", s.pretrain_lr);
  u64("pretrain.batch_size", s.pretrain_batch_size);
  dbl("pretrain.split_ratio", s.pretrain_split_ratio);

  if (f.lr) s.train.lr = *f.lr;
  if (f.epochs) s.train.epochs = *f.epochs;
  if (f.batch_size) s.train.batch_size = *f.batch_size;
  if (f.rank) s.peft.rank = *f.rank;
  if (f.scale) s.peft.parallel_scale = *f.scale;
  if (f.split_ratio) s.split_ratio = *f.split_ratio;
  if (f.snr_db) s.synth.snr_db = *f.snr_db;
  if (f.wall_time) s.train.record_wall_time = true;

  if (f.seed) {
    s.seed = *f.seed;
    s.seed_source = "flag";
  } else if (auto v = file.get_u64("seed")) {
    s.seed = *v;
    s.seed_source = "config";
  } else if (auto e = env_seed()) {
    s.seed = *e;
    s.seed_source = "env";
  }
  s.train.seed = s.seed;

  s.vit.validate();
  s.peft.validate(s.vit.embed_dim);
  s.train.validate();
  s.pretrain_config().validate();
  if (!(s.split_ratio > 0.0 && s.split_ratio < 1.0)) throw ConfigError("data.split_ratio must lie in (0, 1)");
  if (!(s.dynamic_range_db > 0.0)) throw ConfigError("stft.dynamic_range_db must be positive");
  return s;
}

RunManifest start_manifest(const std::string& command, const Settings& s) {
  RunManifest m;
  m.command = command;
  m.seed = s.seed;
  m.seed_source = s.seed_source;
  m.config = s.echo();
  if (s.config_input) m.inputs.push_back({"config", *s.config_input});
  m.notes = s.notes;
  return m;
}

void prepare_out_dir(const std::string& out, const std::vector<std::string>& inputs) {
  if (out.empty()) throw ConfigError("--out is required");
  for (const auto& in : inputs)
    if (!in.empty() && fs::exists(in) && fs::exists(out) && fs::equivalent(in, out))
      throw ConfigError("output directory " + out + " must differ from input " + in);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw IoError("cannot write " + path.string());
  o << text;
  if (!o) throw IoError("write failed for " + path.string());
}

// Writes `text` under the output directory and records it in the manifest.
void emit(RunManifest& m, const std::string& dir, const std::string& name, const std::string& text) {
  const fs::path p = fs::path(dir) / name;
  write_text(p, text);
  m.outputs.emplace_back(name, hash_file(p.string()));
}

void emit_container(RunManifest& m, const std::string& dir, const std::string& name, const TensorContainer& c) {
  emit(m, dir, name, c.serialize());
}

void finish(RunManifest& m, const std::string& dir) { write_text(fs::path(dir) / kManifestName, m.format()); }

// Hash over the corpus manifest and every recording it lists.
std::string corpus_hash(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / radar::kCorpusManifestName;
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw IoError("cannot read " + manifest.string());
  std::ostringstream text;
  text << in.rdbuf();
  Fnv1a h;
  h.update(text.str());
  for (const auto& e : radar::parse_corpus_manifest(text.str())) {
    h.update(e.path);
    h.update(hash_file((fs::path(dir) / e.path).string()));
  }
  return h.hex();
}

struct ImageSet {
  radar::ImageDataset data;
  radar::StftParams stft;
};

ImageSet load_images(const std::string& corpus_dir, const StftOverrides& stft, double range_db, const VitConfig& vit) {
  if (corpus_dir.empty()) throw ConfigError("--corpus is required");
  const auto recs = radar::load_corpus(corpus_dir);
  if (recs.empty()) throw InputError("corpus " + corpus_dir + " lists no recordings");
  ImageSet out;
  out.stft = stft.resolve(recs.front().sample_rate);
  radar::SpectrogramOptions spec;
  spec.dynamic_range_db = range_db;
  radar::RasterOptions raster;
  raster.out_size = vit.image_size;
  raster.channels = vit.channels;
  out.data = radar::build_image_dataset(recs, out.stft, spec, raster);
  return out;
}

void write_data_meta(TensorContainer& c, const Settings& s, const radar::StftParams& p, const radar::DatasetSplit& sp) {
  c.set_meta("data.split_ratio", fmt(s.split_ratio));
  c.set_meta("data.split_seed", std::to_string(s.seed));
  c.set_meta("data.split_hash", sp.hash());
  c.set_meta("stft.window_len", std::to_string(p.window_len));
  c.set_meta("stft.hop", std::to_string(p.hop));
  c.set_meta("stft.fft_len", std::to_string(p.fft_len));
  c.set_meta("stft.dynamic_range_db", fmt(s.dynamic_range_db));
}

std::size_t meta_u64(const TensorContainer& c, const char* key) {
  const std::string& v = c.require_meta(key);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw InputError("checkpoint meta " + std::string(key) + " is not an integer");
  return out;
}

double meta_double(const TensorContainer& c, const char* key) {
  const std::string& v = c.require_meta(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw InputError("checkpoint meta " + std::string(key) + " is not a number");
  return out;
}

TensorContainer read_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw IoError("checkpoint " + path + " does not exist");
  return TensorContainer::read(path);
}

// Backbone weights and their config: pretrained from a checkpoint or a
// fresh seeded initialization.
std::pair<VitConfig, VitWeights> resolve_backbone(const Flags& f, const Settings& s, RunManifest& m) {
  if (!f.backbone.empty()) {
    const TensorContainer c = read_checkpoint(f.backbone);
    m.inputs.push_back({"backbone", {f.backbone, hash_file(f.backbone)}});
    const SelafdModel pre = model_from_container(c);
    m.notes.push_back("model dimensions taken from the backbone checkpoint");
    return {pre.config(), pre.backbone()};
  }
  Rng rng(derive_seed(s.seed, 0xb0b0));
  m.notes.push_back("no backbone given; backbone randomly initialized");
  return {s.vit, init_vit(s.vit, rng)};
}

void print_echo(std::ostream& out, const Settings& s) {
  out << "seed=" << s.seed << " (" << s.seed_source << ")\n";
  for (const auto& [k, v] : s.echo()) out << k << "=" << v << "\n";
  for (const auto& n : s.notes) out << "note: " << n << "\n";
}

// ---- commands ----

int cmd_config(const Flags& f, std::ostream& out) {
  print_echo(out, resolve_settings(f));
  return kExitOk;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  const Settings s = resolve_settings(f);
  if (f.per_class == 0) throw ConfigError("--per-class must be at least 1");
  prepare_out_dir(f.out_dir, {});
  RunManifest m = start_manifest("synth", s);
  m.config.emplace_back("synth.per_class", std::to_string(f.per_class));
  const auto entries = radar::write_synthetic_corpus(f.out_dir, f.per_class, s.seed, s.synth);
  m.outputs.emplace_back(radar::kCorpusManifestName,
                         hash_file((fs::path(f.out_dir) / radar::kCorpusManifestName).string()));
  for (const auto& e : entries) m.outputs.emplace_back(e.path, hash_file((fs::path(f.out_dir) / e.path).string()));
  finish(m, f.out_dir);
  out << "wrote " << entries.size() << " recordings to " << f.out_dir << "\n";
  return kExitOk;
}

int cmd_spectrogram(const Flags& f, std::ostream& out) {
  const Settings s = resolve_settings(f);
  if (f.corpus_dir.empty()) throw ConfigError("--corpus is required");
  prepare_out_dir(f.out_dir, {f.corpus_dir});
  RunManifest m = start_manifest("spectrogram", s);
  m.inputs.push_back({"corpus", {f.corpus_dir, corpus_hash(f.corpus_dir)}});
  const auto recs = radar::load_corpus(f.corpus_dir);
  radar::SpectrogramOptions spec;
  spec.dynamic_range_db = s.dynamic_range_db;
  for (const auto& rec : recs) {
    const radar::StftParams p = s.stft.resolve(rec.sample_rate);
    const radar::SpectrogramSample td = radar::stft(rec, p, spec);
    TensorContainer c;
    c.set_meta("source_id", rec.source_id);
    c.set_meta("label", std::string(radar::activity_name(rec.label)));
    c.set_meta("sample_rate", fmt(rec.sample_rate));
    c.set_meta("stft.window_len", std::to_string(p.window_len));
    c.set_meta("stft.hop", std::to_string(p.hop));
    c.set_meta("stft.fft_len", std::to_string(p.fft_len));
    c.set_meta("stft.dynamic_range_db", fmt(spec.dynamic_range_db));
    c.add("td", td.td);
    emit_container(m, f.out_dir, rec.source_id + ".td", c);
    if (!f.no_pgm) {
      // positive Doppler at the top of the image
      const std::string name = rec.source_id + ".pgm";
      radar::write_pgm((fs::path(f.out_dir) / name).string(), td.td, true);
      m.outputs.emplace_back(name, hash_file((fs::path(f.out_dir) / name).string()));
    }
  }
  finish(m, f.out_dir);
  out << "wrote " << recs.size() << " spectrograms to " << f.out_dir << "\n";
  return kExitOk;
}

int cmd_pretrain(const Flags& f, std::ostream& out) {
  const Settings s = resolve_settings(f);
  prepare_out_dir(f.out_dir, {});
  RunManifest m = start_manifest("pretrain", s);
  radar::RasterOptions raster;
  raster.out_size = s.vit.image_size;
  raster.channels = s.vit.channels;
  const auto distractor = radar::distractor_dataset(s.pretrain_per_class, s.seed, s.synth, raster);
  TrainResult result;
  const VitWeights w = pretrain_backbone(s.vit, distractor, s.pretrain_config(), s.pretrain_split_ratio, &result);
  VitConfig cfg = s.vit;
  cfg.num_classes = distractor.num_classes();
  const SelafdModel model(cfg, w, s.peft, FineTuneMode::kFull, s.seed);
  TensorContainer c = model_to_container(model);
  c.set_meta("role", "backbone");
  c.set_meta("pretrain.task", "distractor");
  emit_container(m, f.out_dir, "backbone.ckpt", c);
  emit(m, f.out_dir, "pretrain_log.txt", result.log);
  finish(m, f.out_dir);
  const auto& last = result.history.back();
  out << "pretrained " << result.history.size() << " epochs: train_acc=" << fmt(last.train_acc)
      << " test_acc=" << (last.test_acc ? fmt(*last.test_acc) : std::string("-")) << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  const FineTuneMode mode = parse_mode(f.mode);
  const Settings s = resolve_settings(f);
  if (f.corpus_dir.empty()) throw ConfigError("--corpus is required");
  prepare_out_dir(f.out_dir, {f.corpus_dir});
  print_echo(out, s);
  RunManifest m = start_manifest("train", s);
  m.config.emplace_back("train.mode", std::string(mode_name(mode)));
  m.inputs.push_back({"corpus", {f.corpus_dir, corpus_hash(f.corpus_dir)}});
  auto [vit, weights] = resolve_backbone(f, s, m);
  const ImageSet images = load_images(f.corpus_dir, s.stft, s.dynamic_range_db, vit);
  const radar::DatasetSplit sp = radar::split(images.data.labels(), s.split_ratio, s.seed);
  vit.num_classes = images.data.num_classes();
  SelafdModel model(vit, with_new_head(std::move(weights), vit.num_classes, s.seed), s.peft, mode, s.seed);
  const TrainResult r = train(model, images.data, sp, s.train);
  for (const auto& n : r.notices) m.notes.push_back(n);

  TensorContainer final_ckpt = model_to_container(model);
  write_data_meta(final_ckpt, s, images.stft, sp);
  emit_container(m, f.out_dir, "model.ckpt", final_ckpt);
  if (r.best_checkpoint) {
    TensorContainer best = *r.best_checkpoint;
    write_data_meta(best, s, images.stft, sp);
    best.set_meta("best_epoch", std::to_string(r.best_epoch));
    emit_container(m, f.out_dir, "best.ckpt", best);
  }
  emit(m, f.out_dir, "train_log.txt", r.log);
  MetricsReport report = evaluate(model, images.data, sp);
  report.config = s.echo();
  emit(m, f.out_dir, "report.txt", format_report(report));
  finish(m, f.out_dir);
  out << "mode=" << mode_name(mode) << " epochs=" << r.history.size() << " final_train_loss=" << fmt(r.final_loss())
      << " test_accuracy=" << fmt(report.accuracy) << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const Settings s = resolve_settings(f);
  if (f.corpus_dir.empty()) throw ConfigError("--corpus is required");
  if (f.eval_split != "test" && f.eval_split != "all")
    throw ConfigError("--split must be 'test' or 'all', got '" + f.eval_split + "'");
  const TensorContainer c = read_checkpoint(f.checkpoint);
  prepare_out_dir(f.out_dir, {f.corpus_dir});
  RunManifest m = start_manifest("eval", s);
  m.config.emplace_back("eval.split", f.eval_split);
  m.inputs.push_back({"checkpoint", {f.checkpoint, hash_file(f.checkpoint)}});
  m.inputs.push_back({"corpus", {f.corpus_dir, corpus_hash(f.corpus_dir)}});
  const SelafdModel model = model_from_container(c);

  // The checkpoint's own data settings win so the split is the training one.
  StftOverrides stft = s.stft;
  double range_db = s.dynamic_range_db;
  double ratio = s.split_ratio;
  std::uint64_t split_seed = s.seed;
  if (c.meta("stft.window_len")) {
    stft.window_len = meta_u64(c, "stft.window_len");
    stft.hop = meta_u64(c, "stft.hop");
    stft.fft_len = meta_u64(c, "stft.fft_len");
    range_db = meta_double(c, "stft.dynamic_range_db");
    ratio = meta_double(c, "data.split_ratio");
    split_seed = meta_u64(c, "data.split_seed");
  } else {
    m.notes.push_back("checkpoint carries no data settings; using the resolved config");
  }
  const ImageSet images = load_images(f.corpus_dir, stft, range_db, model.config());
  if (images.data.num_classes() != model.config().num_classes)
    throw InputError("checkpoint head has " + std::to_string(model.config().num_classes) + " classes, corpus has " +
                     std::to_string(images.data.num_classes()));
  radar::DatasetSplit sp;
  if (f.eval_split == "all") {
    for (std::size_t i = 0; i < images.data.samples.size(); ++i) sp.test.push_back(i);
  } else {
    sp = radar::split(images.data.labels(), ratio, split_seed);
    if (auto h = c.meta("data.split_hash"); h && *h != sp.hash())
      m.notes.push_back("split hash " + sp.hash() + " differs from the training split " + *h);
  }
  MetricsReport report = evaluate(model, images.data, sp);
  report.config = {{"checkpoint", f.checkpoint}, {"split", f.eval_split}};
  const std::string text = format_report(report);
  emit(m, f.out_dir, "report.txt", text);
  emit(m, f.out_dir, "predictions.csv", format_predictions(report));
  finish(m, f.out_dir);
  out << text;
  return kExitOk;
}

std::vector<FineTuneMode> parse_mode_list(const std::string& text) {
  if (text.empty()) return all_modes();
  std::vector<FineTuneMode> modes;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) modes.push_back(parse_mode(item));
  if (modes.empty()) throw ConfigError("--modes lists no mode");
  return modes;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
  const std::vector<FineTuneMode> modes = parse_mode_list(f.modes);
  const Settings s = resolve_settings(f);
  if (f.corpus_dir.empty()) throw ConfigError("--corpus is required");
  prepare_out_dir(f.out_dir, {f.corpus_dir});
  RunManifest m = start_manifest("ablate", s);
  m.inputs.push_back({"corpus", {f.corpus_dir, corpus_hash(f.corpus_dir)}});
  auto [vit, weights] = resolve_backbone(f, s, m);
  const ImageSet images = load_images(f.corpus_dir, s.stft, s.dynamic_range_db, vit);
  const radar::DatasetSplit sp = radar::split(images.data.labels(), s.split_ratio, s.seed);
  vit.num_classes = images.data.num_classes();
  weights = with_new_head(std::move(weights), vit.num_classes, s.seed);

  AblationConfig cfg;
  cfg.train = s.train;
  cfg.peft = s.peft;
  cfg.modes = modes;
  AblationTable table = ablate(vit, weights, images.data, sp, cfg);
  for (auto& row : table.rows) {
    const std::string name(mode_name(row.mode));
    if (!row.ok) {
      m.notes.push_back("mode " + name + " failed: " + row.error);
      continue;
    }
    row.report.config = s.echo();
    emit(m, f.out_dir, "report_" + name + ".txt", format_report(row.report));
    emit(m, f.out_dir, "train_log_" + name + ".txt", row.train_log);
    if (row.checkpoint) {
      TensorContainer c = *row.checkpoint;
      write_data_meta(c, s, images.stft, sp);
      emit_container(m, f.out_dir, "model_" + name + ".ckpt", c);
    }
  }
  emit(m, f.out_dir, "ablation.txt", format_ablation(table));
  const std::string human = format_ablation_table(table);
  emit(m, f.out_dir, "ablation_table.txt", human);
  finish(m, f.out_dir);
  out << human;
  return kExitOk;
}

int cmd_export_attn(const Flags& f, std::ostream& out) {
  const Settings s = resolve_settings(f);
  if (f.corpus_dir.empty()) throw ConfigError("--corpus is required");
  const TensorContainer c = read_checkpoint(f.checkpoint);
  prepare_out_dir(f.out_dir, {f.corpus_dir});
  RunManifest m = start_manifest("export-attn", s);
  m.inputs.push_back({"checkpoint", {f.checkpoint, hash_file(f.checkpoint)}});
  m.inputs.push_back({"corpus", {f.corpus_dir, corpus_hash(f.corpus_dir)}});
  const SelafdModel model = model_from_container(c);
  const VitConfig& vit = model.config();
  const std::size_t layer = f.layer.value_or(vit.depth - 1);
  if (layer >= vit.depth) throw ConfigError("--layer must be below the depth " + std::to_string(vit.depth));
  if (f.head && *f.head >= vit.heads) throw ConfigError("--head must be below " + std::to_string(vit.heads));
  m.config.emplace_back("attn.layer", std::to_string(layer));
  m.config.emplace_back("attn.head", f.head ? std::to_string(*f.head) : std::string("mean"));

  StftOverrides stft = s.stft;
  double range_db = s.dynamic_range_db;
  if (c.meta("stft.window_len")) {
    stft.window_len = meta_u64(c, "stft.window_len");
    stft.hop = meta_u64(c, "stft.hop");
    stft.fft_len = meta_u64(c, "stft.fft_len");
    range_db = meta_double(c, "stft.dynamic_range_db");
  }
  const ImageSet images = load_images(f.corpus_dir, stft, range_db, vit);
  const std::size_t count = std::min(images.data.samples.size(), f.limit.value_or(images.data.samples.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const auto& sample = images.data.samples[i];
    const AttentionSet attn = extract_attention(model, sample.image);
    const Tensor map = upsample_map(attn.cls_grid(layer, f.head), vit.image_size);
    const std::string name = "attn_" + sample.id + ".pgm";
    const fs::path p = fs::path(f.out_dir) / name;
    // image row 0 is the most negative Doppler; flip so positive is on top
    radar::write_pgm(p.string(), map, true);
    m.outputs.emplace_back(name, hash_file(p.string()));
  }
  finish(m, f.out_dir);
  out << "wrote " << count << " attention maps to " << f.out_dir << "\n";
  return kExitOk;
}

void add_settings_flags(CLI::App* cmd, Flags& f, bool training) {
  cmd->add_option("--config", f.config_path, "key=value config file; a missing file means defaults");
  cmd->add_option("--seed", f.seed, "master seed (fallback: config, then SELAFD_SEED, then 0)");
  cmd->add_flag("--tiny", f.tiny, "use the tiny model preset (overrides model.* keys)");
  if (!training) return;
  cmd->add_option("--lr", f.lr, "initial learning rate");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-size", f.batch_size, "minibatch size");
  cmd->add_option("--rank", f.rank, "LoRA rank");
  cmd->add_option("--scale", f.scale, "parallel adapter scale s");
  cmd->add_option("--split-ratio", f.split_ratio, "train fraction of the stratified split");
  cmd->add_flag("--wall-time", f.wall_time, "record per-epoch wall time in the log");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SelaFD: parameter-efficient ViT fine-tuning on radar Time-Doppler maps", "selafd"};
  app.set_version_flag("--version", std::string("selafd ") + kVersion);
  app.require_subcommand(1);
  Flags f;

  auto* config = app.add_subcommand("config", "print the resolved configuration");
  add_settings_flags(config, f, true);

  auto* synth = app.add_subcommand("synth", "write a synthetic six-activity corpus");
  add_settings_flags(synth, f, false);
  synth->add_option("--out", f.out_dir, "corpus directory")->required();
  synth->add_option("--per-class", f.per_class, "recordings per activity");
  synth->add_option("--snr-db", f.snr_db, "noise level relative to a unit return");

  auto* spectrogram = app.add_subcommand("spectrogram", "compute Time-Doppler maps of a corpus");
  add_settings_flags(spectrogram, f, false);
  spectrogram->add_option("--corpus", f.corpus_dir, "corpus directory")->required();
  spectrogram->add_option("--out", f.out_dir, "output directory")->required();
  spectrogram->add_flag("--no-pgm", f.no_pgm, "skip the PGM previews");

  auto* pretrain = app.add_subcommand("pretrain", "train a backbone on the distractor task");
  add_settings_flags(pretrain, f, false);
  pretrain->add_option("--out", f.out_dir, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "fine-tune one mode on a corpus");
  add_settings_flags(train_cmd, f, true);
  train_cmd->add_option("--corpus", f.corpus_dir, "corpus directory")->required();
  train_cmd->add_option("--mode", f.mode, "selafd, lora_only, adapter_only, linear or full")->required();
  train_cmd->add_option("--backbone", f.backbone, "pretrained backbone checkpoint");
  train_cmd->add_option("--out", f.out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  add_settings_flags(eval_cmd, f, false);
  eval_cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--corpus", f.corpus_dir, "corpus directory")->required();
  eval_cmd->add_option("--out", f.out_dir, "output directory")->required();
  eval_cmd->add_option("--split", f.eval_split, "'test' (the training split) or 'all'");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate every mode on one split");
  add_settings_flags(ablate_cmd, f, true);
  ablate_cmd->add_option("--corpus", f.corpus_dir, "corpus directory")->required();
  ablate_cmd->add_option("--backbone", f.backbone, "pretrained backbone checkpoint");
  ablate_cmd->add_option("--modes", f.modes, "comma-separated subset of modes (default: all five)");
  ablate_cmd->add_option("--out", f.out_dir, "output directory")->required();

  auto* attn = app.add_subcommand("export-attn", "write class-token attention maps as PGM images");
  add_settings_flags(attn, f, false);
  attn->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  attn->add_option("--corpus", f.corpus_dir, "corpus directory")->required();
  attn->add_option("--out", f.out_dir, "output directory")->required();
  attn->add_option("--layer", f.layer, "block index (default: last)");
  attn->add_option("--head", f.head, "head index (default: mean over heads)");
  attn->add_option("--limit", f.limit, "export at most this many samples");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (config->parsed()) return cmd_config(f, out);
    if (synth->parsed()) return cmd_synth(f, out);
    if (spectrogram->parsed()) return cmd_spectrogram(f, out);
    if (pretrain->parsed()) return cmd_pretrain(f, out);
    if (train_cmd->parsed()) return cmd_train(f, out);
    if (eval_cmd->parsed()) return cmd_eval(f, out);
    if (ablate_cmd->parsed()) return cmd_ablate(f, out);
    if (attn->parsed()) return cmd_export_attn(f, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "error: numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace selafd::cli
