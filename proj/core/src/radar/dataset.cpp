// SPDX-License-Identifier: Apache-2.0
#include "selafd/radar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "selafd/error.hpp"
#include "selafd/hash.hpp"
#include "selafd/random.hpp"

namespace selafd::radar {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw InputError("bad " + what + " '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw InputError("bad " + what + " '" + text + "'");
  return v;
}

// "a+bi", "a-bj", "a b" or a bare real.
std::complex<double> parse_complex(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) throw InputError("empty sample line");
  if (const auto sp = s.find_first_of(" \t,"); sp != std::string::npos) {
    const std::string re = trim(s.substr(0, sp));
    const std::string im = trim(s.substr(sp + 1));
    return {parse_number(re, "real part"), parse_number(im, "imaginary part")};
  }
  const char last = s.back();
  if (last != 'i' && last != 'j') return {parse_number(s, "sample"), 0.0};
  s.pop_back();
  // split at the last sign that is not part of an exponent
  std::size_t cut = std::string::npos;
  for (std::size_t k = s.size(); k-- > 1;)
    if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      cut = k;
      break;
    }
  if (cut == std::string::npos) return {0.0, parse_number(s, "imaginary part")};
  return {parse_number(s.substr(0, cut), "real part"), parse_number(s.substr(cut), "imaginary part")};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CwRecording ingest_text_iq(const fs::path& path, const IngestConfig& cfg) {
  const std::string name = path.filename().string();
  const std::regex re(cfg.label_pattern);
  std::smatch m;
  if (!std::regex_search(name, m, re) || m.size() < 2) throw InputError("file name does not match label pattern");
  const auto it = cfg.label_map.find(m[1].str());
  if (it == cfg.label_map.end()) throw InputError("no label mapped for code '" + m[1].str() + "'");

  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::string> header;
  for (std::size_t i = 0; i < cfg.header_lines; ++i) {
    if (!std::getline(in, line)) throw InputError("file shorter than its header");
    header.push_back(line);
  }
  CwRecording rec;
  rec.label = it->second;
  rec.source_id = path.stem().string();
  std::replace(rec.source_id.begin(), rec.source_id.end(), ' ', '_');
  if (cfg.sample_rate_line) {
    if (*cfg.sample_rate_line >= header.size()) throw InputError("sample-rate line outside the header");
    std::istringstream hs(header[*cfg.sample_rate_line]);
    std::string tok;
    bool found = false;
    while (hs >> tok) {
      try {
        rec.sample_rate = parse_number(tok, "sample rate");
        found = true;
        break;
      } catch (const InputError&) {
      }
    }
    if (!found) throw InputError("no sample rate in header line");
  } else {
    rec.sample_rate = cfg.sample_rate;
  }
  if (!(rec.sample_rate > 0.0)) throw InputError("sample rate must be positive");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rec.samples.push_back(parse_complex(line));
  }
  if (rec.samples.empty()) throw InputError("no samples");
  for (const auto& s : rec.samples)
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) throw InputError("non-finite sample");
  return rec;
}

}  // namespace

std::string format_corpus_manifest(const std::vector<CorpusEntry>& entries) {
  std::string out = "# id label path seed\n";
  for (const auto& e : entries)
    out += e.id + " " + std::string(activity_name(e.label)) + " " + e.path + " " + std::to_string(e.seed) + "\n";
  return out;
}

std::vector<CorpusEntry> parse_corpus_manifest(const std::string& text) {
  std::vector<CorpusEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    CorpusEntry e;
    std::string label, seed, extra;
    if (!(ls >> e.id >> label >> e.path >> seed) || (ls >> extra))
      throw InputError("corpus manifest line " + std::to_string(lineno) + " needs 'id label path seed'");
    e.label = parse_activity(label);
    e.seed = parse_u64(seed, "seed");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CwRecording> synthetic_corpus(std::size_t per_class, std::uint64_t master_seed, const SynthOptions& o) {
  if (per_class == 0) throw InputError("per_class must be positive");
  std::vector<CwRecording> out;
  out.reserve(per_class * kNumActivities);
  for (Activity a : all_activities())
    for (std::size_t i = 0; i < per_class; ++i) {
      CwRecording rec = synth_activity(a, o, corpus_sample_seed(master_seed, a, i));
      rec.source_id = std::string(activity_name(a)) + "_" + std::to_string(i);
      out.push_back(std::move(rec));
    }
  return out;
}

std::vector<CorpusEntry> write_synthetic_corpus(const std::string& dir, std::size_t per_class,
                                                std::uint64_t master_seed, const SynthOptions& o) {
  if (per_class == 0) throw InputError("per_class must be positive");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  std::vector<CorpusEntry> entries;
  for (Activity a : all_activities())
    for (std::size_t i = 0; i < per_class; ++i) {
      CorpusEntry e;
      e.label = a;
      e.seed = corpus_sample_seed(master_seed, a, i);
      e.id = std::string(activity_name(a)) + "_" + std::to_string(i);
      e.path = e.id + ".rec";
      CwRecording rec = synth_activity(a, o, e.seed);
      rec.source_id = e.id;
      write_recording((fs::path(dir) / e.path).string(), rec);
      entries.push_back(std::move(e));
    }
  const std::string manifest = format_corpus_manifest(entries);
  std::ofstream out(fs::path(dir) / kCorpusManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus manifest in " + dir);
  out << manifest;
  if (!out) throw IoError("write failed for corpus manifest in " + dir);
  return entries;
}

std::vector<CwRecording> load_corpus(const std::string& dir) {
  const auto entries = parse_corpus_manifest(read_text(fs::path(dir) / kCorpusManifestName));
  std::vector<CwRecording> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    CwRecording rec = read_recording((fs::path(dir) / e.path).string());
    if (rec.label != e.label)
      throw InputError("label mismatch for " + e.id + ": manifest says " + std::string(activity_name(e.label)));
    out.push_back(std::move(rec));
  }
  return out;
}

IngestConfig IngestConfig::from_text(const std::string& text) {
  IngestConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("ingest config line " + std::to_string(lineno) + " lacks '='");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "layout") {
        if (value != "selafd" && value != "text_iq") throw ConfigError("layout must be selafd or text_iq");
        c.layout = value;
      } else if (key == "extension") {
        c.extension = value;
      } else if (key == "header_lines") {
        c.header_lines = parse_u64(value, key);
      } else if (key == "sample_rate_line") {
        c.sample_rate_line = parse_u64(value, key);
      } else if (key == "sample_rate") {
        c.sample_rate = parse_number(value, key);
      } else if (key == "label_pattern") {
        c.label_pattern = value;
      } else if (key == "expected_count") {
        c.expected_count = parse_u64(value, key);
      } else if (key.rfind("label.", 0) == 0) {
        c.label_map[key.substr(6)] = parse_activity(value);
      } else {
        throw ConfigError("unknown ingest key '" + key + "'");
      }
    } catch (const InputError& e) {
      throw ConfigError(std::string("ingest config line ") + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

IngestResult ingest_uog(const std::string& dir, const IngestConfig& cfg) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == cfg.extension) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  IngestResult result;
  for (const auto& f : files) {
    try {
      CwRecording rec = cfg.layout == "text_iq" ? ingest_text_iq(f, cfg) : read_recording(f.string());
      result.recordings.push_back(std::move(rec));
    } catch (const Error& e) {
      result.skips.push_back({f.string(), e.what()});
    }
  }
  if (result.recordings.size() != cfg.expected_count)
    result.warnings.push_back("ingested " + std::to_string(result.recordings.size()) + " recordings, expected " +
                              std::to_string(cfg.expected_count));
  return result;
}

std::string DatasetSplit::hash() const {
  Fnv1a h;
  h.update_u64(train.size());
  for (auto i : train) h.update_u64(i);
  h.update_u64(test.size());
  for (auto i : test) h.update_u64(i);
  return h.hex();
}

DatasetSplit split(const std::vector<int>& labels, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split ratio must lie in (0, 1)");
  if (labels.empty()) throw InputError("cannot split an empty dataset");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  DatasetSplit out;
  out.seed = seed;
  out.ratio = ratio;
  Rng rng(derive_seed(seed, 0x5b11));
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw InputError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                       " sample(s); a split needs at least two");
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    auto n_train = static_cast<std::size_t>(std::lround(static_cast<double>(idx.size()) * ratio));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<int> ImageDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

ImageDataset build_image_dataset(const std::vector<CwRecording>& recordings, const StftParams& params,
                                 const SpectrogramOptions& spec, const RasterOptions& raster) {
  ImageDataset out;
  out.class_names = activity_names();
  out.samples.reserve(recordings.size());
  for (const auto& rec : recordings) {
    const SpectrogramSample td = stft(rec, params, spec);
    out.samples.push_back({rasterize(td, raster), static_cast<int>(rec.label), rec.source_id});
  }
  return out;
}

ImageDataset distractor_dataset(std::size_t per_class, std::uint64_t master_seed, const SynthOptions& synth,
                                const RasterOptions& raster) {
  if (per_class == 0) throw InputError("per_class must be positive");
  ImageDataset out;
  out.class_names = {"tone_pos", "tone_neg", "chirp_up", "chirp_down"};
  const StftParams params = StftParams::defaults_for(synth.sample_rate);
  for (std::size_t kind = 0; kind < kNumDistractorClasses; ++kind)
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto seed = derive_seed(derive_seed(master_seed, 0xd000 + kind), i);
      const auto samples = synth_distractor(kind, synth, seed);
      const SpectrogramSample td = stft_samples(samples, synth.sample_rate, params);
      out.samples.push_back({rasterize(td, raster), static_cast<int>(kind),
                             out.class_names[kind] + "_" + std::to_string(i)});
    }
  return out;
}

}  // namespace selafd::radar
