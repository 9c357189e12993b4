// SPDX-License-Identifier: Apache-2.0
#include "selafd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "selafd/error.hpp"

namespace selafd {

namespace {

constexpr std::string_view kMagic = "SELAFD1";

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::size_t element_bytes(StorageType t) { return t == StorageType::kFloat64 ? 8 : 4; }

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
  return true;
}

std::size_t parse_size(const std::string& token, const std::string& line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw InputError("malformed number '" + token + "' in container line: " + line);
  return v;
}

}  // namespace

std::string_view storage_name(StorageType type) { return type == StorageType::kFloat64 ? "f64" : "f32"; }

void TensorContainer::set_meta(std::string key, std::string value) {
  if (!valid_token(key)) throw InputError("invalid meta key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw InputError("meta value for " + key + " contains a newline");
  for (auto& [k, v] : meta_)
    if (k == key) {
      v = std::move(value);
      return;
    }
  meta_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> TensorContainer::meta(std::string_view key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  return std::nullopt;
}

const std::string& TensorContainer::require_meta(std::string_view key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  throw InputError("container is missing meta key '" + std::string(key) + "'");
}

void TensorContainer::add(std::string name, Tensor tensor, StorageType storage) {
  if (!valid_token(name)) throw InputError("invalid tensor name '" + name + "'");
  if (find(name)) throw InputError("duplicate tensor name '" + name + "'");
  tensor.set_requires_grad(false);
  entries_.push_back({std::move(name), std::move(tensor), storage});
}

const TensorContainer::Entry* TensorContainer::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const Tensor& TensorContainer::require(std::string_view name) const {
  if (const Entry* e = find(name)) return e->tensor;
  throw InputError("container is missing tensor '" + std::string(name) + "'");
}

std::string TensorContainer::serialize() const {
  std::string header(kMagic);
  header += '\n';
  for (const auto& [k, v] : meta_) header += "meta " + k + " " + v + "\n";
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    const std::size_t bytes = e.tensor.size() * element_bytes(e.storage);
    header += "tensor " + e.name + " " + std::string(storage_name(e.storage)) + " " + std::to_string(offset) +
              " " + std::to_string(bytes) + " " + std::to_string(e.tensor.rank());
    for (auto d : e.tensor.shape()) header += " " + std::to_string(d);
    header += "\n";
    offset += bytes;
  }
  header += "end\n";
  std::string out = std::move(header);
  out.reserve(out.size() + offset);
  for (const auto& e : entries_) {
    for (double v : e.tensor.data()) {
      if (e.storage == StorageType::kFloat64)
        put_u64_le(out, std::bit_cast<std::uint64_t>(v));
      else
        put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

TensorContainer TensorContainer::parse(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw InputError("truncated container header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) throw InputError("not a SELAFD1 container (bad magic)");

  struct Pending {
    std::string name;
    StorageType storage;
    std::size_t offset, nbytes;
    Shape shape;
  };
  TensorContainer c;
  std::vector<Pending> pending;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    if (line.rfind("meta ", 0) == 0) {
      const std::size_t sp = line.find(' ', 5);
      if (sp == std::string::npos) throw InputError("malformed meta line: " + line);
      c.set_meta(line.substr(5, sp - 5), line.substr(sp + 1));
      continue;
    }
    std::istringstream in(line);
    std::string kw, name, dtype, tok;
    in >> kw >> name >> dtype;
    if (kw != "tensor") throw InputError("unexpected container header line: " + line);
    Pending p;
    p.name = name;
    if (dtype == "f64")
      p.storage = StorageType::kFloat64;
    else if (dtype == "f32")
      p.storage = StorageType::kFloat32;
    else
      throw InputError("unknown dtype '" + dtype + "' for tensor " + name);
    in >> tok;
    p.offset = parse_size(tok, line);
    in >> tok;
    p.nbytes = parse_size(tok, line);
    in >> tok;
    const std::size_t rank = parse_size(tok, line);
    for (std::size_t i = 0; i < rank; ++i) {
      if (!(in >> tok)) throw InputError("missing dimension in line: " + line);
      p.shape.push_back(parse_size(tok, line));
    }
    if (shape_size(p.shape) * element_bytes(p.storage) != p.nbytes)
      throw InputError("byte count does not match shape for tensor " + name);
    pending.push_back(std::move(p));
  }

  const std::string_view payload = bytes.substr(pos);
  for (auto& p : pending) {
    if (p.offset + p.nbytes > payload.size()) throw InputError("payload truncated for tensor " + p.name);
    const auto* base = reinterpret_cast<const unsigned char*>(payload.data() + p.offset);
    std::vector<double> data(shape_size(p.shape));
    const int width = static_cast<int>(element_bytes(p.storage));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint64_t raw = get_le(base + i * width, width);
      data[i] = p.storage == StorageType::kFloat64
                    ? std::bit_cast<double>(raw)
                    : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
    }
    c.add(p.name, Tensor(p.shape, std::move(data)), p.storage);
  }
  return c;
}

void TensorContainer::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

TensorContainer TensorContainer::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, std::string_view key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("meta '" + std::string(key) + "' is not a number: " + s);
  return v;
}

std::size_t meta_size(const TensorContainer& c, std::string_view key) {
  const std::string& s = c.require_meta(key);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("meta '" + std::string(key) + "' is not an integer: " + s);
  return v;
}

}  // namespace

void write_config_meta(TensorContainer& c, const VitConfig& v, const PeftConfig& p, FineTuneMode mode) {
  c.set_meta("vit.image_size", std::to_string(v.image_size));
  c.set_meta("vit.patch_size", std::to_string(v.patch_size));
  c.set_meta("vit.channels", std::to_string(v.channels));
  c.set_meta("vit.embed_dim", std::to_string(v.embed_dim));
  c.set_meta("vit.depth", std::to_string(v.depth));
  c.set_meta("vit.heads", std::to_string(v.heads));
  c.set_meta("vit.mlp_ratio", std::to_string(v.mlp_ratio));
  c.set_meta("vit.num_classes", std::to_string(v.num_classes));
  c.set_meta("vit.ln_eps", fmt_double(v.ln_eps));
  c.set_meta("peft.rank", std::to_string(p.rank));
  c.set_meta("peft.bottleneck_ratio", fmt_double(p.bottleneck_ratio));
  c.set_meta("peft.parallel_scale", fmt_double(p.parallel_scale));
  c.set_meta("peft.lora_query", p.lora_query ? "1" : "0");
  c.set_meta("peft.lora_value", p.lora_value ? "1" : "0");
  c.set_meta("mode", std::string(mode_name(mode)));
}

VitConfig vit_config_from_meta(const TensorContainer& c) {
  VitConfig v;
  v.image_size = meta_size(c, "vit.image_size");
  v.patch_size = meta_size(c, "vit.patch_size");
  v.channels = meta_size(c, "vit.channels");
  v.embed_dim = meta_size(c, "vit.embed_dim");
  v.depth = meta_size(c, "vit.depth");
  v.heads = meta_size(c, "vit.heads");
  v.mlp_ratio = meta_size(c, "vit.mlp_ratio");
  v.num_classes = meta_size(c, "vit.num_classes");
  v.ln_eps = parse_double(c.require_meta("vit.ln_eps"), "vit.ln_eps");
  v.validate();
  return v;
}

PeftConfig peft_config_from_meta(const TensorContainer& c) {
  PeftConfig p;
  p.rank = meta_size(c, "peft.rank");
  p.bottleneck_ratio = parse_double(c.require_meta("peft.bottleneck_ratio"), "peft.bottleneck_ratio");
  p.parallel_scale = parse_double(c.require_meta("peft.parallel_scale"), "peft.parallel_scale");
  p.lora_query = c.require_meta("peft.lora_query") == "1";
  p.lora_value = c.require_meta("peft.lora_value") == "1";
  return p;
}

TensorContainer model_to_container(const SelafdModel& model, CheckpointParts parts, StorageType storage) {
  TensorContainer c;
  write_config_meta(c, model.config(), model.peft_config(), model.mode());
  c.set_meta("parts", parts == CheckpointParts::kAll ? "all" : parts == CheckpointParts::kBackbone ? "backbone" : "peft");
  model.for_each_param([&](const std::string& name, const Tensor& t) {
    const bool is_peft = name.rfind("peft/", 0) == 0;
    if (parts == CheckpointParts::kBackbone && is_peft) return;
    if (parts == CheckpointParts::kPeft && !is_peft) return;
    c.add(name, t, storage);
  });
  return c;
}

void load_backbone(const TensorContainer& c, VitWeights& weights) {
  for_each_weight(weights, [&](const std::string& name, Tensor& t) {
    if (name.rfind("head.", 0) == 0) return;
    const Tensor& src = c.require("backbone/" + name);
    if (!t.empty() && src.shape() != t.shape())
      throw InputError("checkpoint tensor backbone/" + name + " has shape " + shape_string(src.shape()) +
                       ", model expects " + shape_string(t.shape()));
    const bool rg = t.requires_grad();
    t = src;
    t.set_requires_grad(rg);
  });
}

void load_peft(const TensorContainer& c, SelafdModel& model) {
  model.for_each_param([&](const std::string& name, Tensor& t) {
    if (name.rfind("peft/", 0) != 0) return;
    const Tensor& src = c.require(name);
    if (src.shape() != t.shape())
      throw InputError("checkpoint tensor " + name + " has shape " + shape_string(src.shape()) +
                       ", model expects " + shape_string(t.shape()));
    const bool rg = t.requires_grad();
    t = src;
    t.set_requires_grad(rg);
  });
}

SelafdModel model_from_container(const TensorContainer& c) {
  const VitConfig vit = vit_config_from_meta(c);
  const PeftConfig peft = peft_config_from_meta(c);
  const FineTuneMode mode = parse_mode(c.require_meta("mode"));
  Rng rng(0);
  VitWeights w = init_vit(vit, rng);
  load_backbone(c, w);
  w.head.weight = c.require("head/weight");
  w.head.bias = c.require("head/bias");
  SelafdModel model(vit, std::move(w), peft, mode, 0);
  load_peft(c, model);
  return model;
}

}  // namespace selafd
