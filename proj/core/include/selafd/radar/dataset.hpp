// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selafd/radar/raster.hpp"
#include "selafd/radar/recording.hpp"
#include "selafd/radar/stft.hpp"
#include "selafd/radar/synth.hpp"

namespace selafd::radar {

/// One line of a corpus manifest.
struct CorpusEntry {
  std::string id;
  Activity label = Activity::kWalking;
  std::string path;  // relative to the corpus directory
  std::uint64_t seed = 0;
};

/// Corpus manifest: '#' comment lines, then "id label path seed" lines.
std::string format_corpus_manifest(const std::vector<CorpusEntry>& entries);
std::vector<CorpusEntry> parse_corpus_manifest(const std::string& text);

inline constexpr const char* kCorpusManifestName = "corpus.txt";

/// Writes `per_class` recordings of each activity plus corpus.txt into
/// `dir` (created if missing). Returns the manifest entries.
std::vector<CorpusEntry> write_synthetic_corpus(const std::string& dir, std::size_t per_class,
                                                std::uint64_t master_seed, const SynthOptions& options);

/// Generates the same corpus in memory (no files).
std::vector<CwRecording> synthetic_corpus(std::size_t per_class, std::uint64_t master_seed,
                                          const SynthOptions& options);

/// Reads every recording listed in `dir`/corpus.txt, in manifest order.
std::vector<CwRecording> load_corpus(const std::string& dir);

/// Raw-file layout for third-party CW recordings.
struct IngestConfig {
  /// "selafd" for SELAFD-REC1 files, "text_iq" for header lines followed
  /// by one complex sample per line ("a+bi", "a-bj" or "a b").
  std::string layout = "selafd";
  std::string extension = ".rec";
  std::size_t header_lines = 0;
  /// Zero-based header line holding the sample rate; when absent
  /// `sample_rate` is used.
  std::optional<std::size_t> sample_rate_line;
  double sample_rate = 0.0;
  /// Regex applied to the file name; capture group 1 is looked up in
  /// `label_map` (text_iq layout only).
  std::string label_pattern = "A(\\d+)";
  std::map<std::string, Activity> label_map;
  /// Corpus size expected from the public dataset; only a warning.
  std::size_t expected_count = 1753;

  /// Parses the flat key=value ingestion config.
  static IngestConfig from_text(const std::string& text);
};

struct IngestSkip {
  std::string path;
  std::string reason;
};

struct IngestResult {
  std::vector<CwRecording> recordings;
  std::vector<IngestSkip> skips;
  std::vector<std::string> warnings;
};

/// Ingests every matching file under `dir` in sorted name order. Malformed
/// files land in `skips`, never abort the run. A count different from
/// expected_count adds a warning.
IngestResult ingest_uog(const std::string& dir, const IngestConfig& config);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  double ratio = 0.8;
  bool stratified = true;

  /// Stable hash of the two index lists.
  std::string hash() const;
};

/// Stratified seeded split: each class contributes round(count * ratio)
/// samples to train (at least one to each side). Throws InputError for a
/// ratio outside (0, 1) or a class with fewer than two samples.
DatasetSplit split(const std::vector<int>& labels, double ratio, std::uint64_t seed);

/// A model-ready sample.
struct LabeledImage {
  Tensor image;
  int label = 0;
  std::string id;
};

struct ImageDataset {
  std::vector<LabeledImage> samples;
  std::vector<std::string> class_names;

  std::vector<int> labels() const;
  std::size_t num_classes() const { return class_names.size(); }
};

/// STFT + rasterization of every recording.
ImageDataset build_image_dataset(const std::vector<CwRecording>& recordings, const StftParams& params,
                                 const SpectrogramOptions& spec, const RasterOptions& raster);

/// Balanced distractor-task images (`per_class` of each of the four kinds).
ImageDataset distractor_dataset(std::size_t per_class, std::uint64_t master_seed, const SynthOptions& synth,
                                const RasterOptions& raster);

}  // namespace selafd::radar
